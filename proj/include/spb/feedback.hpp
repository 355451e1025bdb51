#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spb/exponents.hpp"
#include "spb/pmf.hpp"

namespace spb {

/// Deterministic feedback encoder: for each message and time t, a map from
/// the output history y_1..y_{t-1} to a channel input. Histories are ranked
/// as base-|Y| little-endian integers (y_1 is the least significant digit),
/// and the per-message table is flat in (t, history rank) order, so the
/// entry count per message is sum_t |Y|^(t-1).
class FeedbackEncoder {
 public:
  FeedbackEncoder() = default;
  FeedbackEncoder(int n, int message_count, int input_size, int output_size);

  int n() const { return n_; }
  int message_count() const { return message_count_; }
  int input_size() const { return input_size_; }
  int output_size() const { return output_size_; }
  int64_t entries_per_message() const { return per_message_; }

  /// Input at time t (1-based) given the rank of y_1..y_{t-1}.
  int input_at(int message, int t, int64_t history_rank) const {
    return table_[static_cast<size_t>(message) * per_message_ + offset_[t - 1] + history_rank];
  }
  void set_input(int message, int t, int64_t history_rank, int input);

  /// Encoder ignoring feedback: message m sends codewords[m] symbol by symbol.
  static FeedbackEncoder from_codewords(int n, int input_size, int output_size,
                                        const std::vector<std::vector<int>>& codewords);

  bool operator==(const FeedbackEncoder&) const = default;

 private:
  int n_ = 0, message_count_ = 0, input_size_ = 0, output_size_ = 0;
  int64_t per_message_ = 0;
  std::vector<int64_t> offset_;  // offset_[t-1] = start of time-t block
  std::vector<int32_t> table_;
};

/// Total map from output strings (ranked little-endian) to message indices.
using Decoder = std::vector<int32_t>;

struct CodeEvaluation {
  std::vector<double> conditional_error;  // per message
  double average_error = 0.0;
  double rate_nats = 0.0;  // ln(message_count) / n
};

/// Number of output strings |Y|^n; throws budget_error beyond `cap`.
int64_t output_space_size(int output_size, int n, int64_t cap = int64_t{1} << 20);

/// Law of y_1..y_n for one message: prob[rank] = prod_t W(y_t | input at t).
std::vector<double> feedback_output_law(const Dmc& w, const FeedbackEncoder& enc, int message,
                                        int64_t cap = int64_t{1} << 20);

/// Exact error probabilities by summation over the output space.
CodeEvaluation evaluate_code(const Dmc& w, const FeedbackEncoder& enc, const Decoder& dec,
                             int64_t cap = int64_t{1} << 20);

/// Maximum-likelihood decoder under the uniform message prior; ties go to the
/// smallest message index.
Decoder map_decoder(const Dmc& w, const FeedbackEncoder& enc, int64_t cap = int64_t{1} << 20);

/// Exact best feedback code by backward induction over the output-history
/// tree: at each history node choose the per-message input tuple maximizing
/// the expected terminal maximum-likelihood mass. Ties break toward the
/// lexicographically smallest tuple. Throws budget_error when the projected
/// node-operation count exceeds `budget`.
struct OptimalCode {
  FeedbackEncoder encoder;
  CodeEvaluation evaluation;  // with MAP decoding
  Decoder decoder;
};
OptimalCode optimal_feedback_code(const Dmc& w, int n, int message_count,
                                  int64_t budget = int64_t{1} << 24);

/// Compares the exact optimum against the non-asymptotic lower bound.
struct SpbVerification {
  double optimal_error = 0.0;
  SpbBound bound;
  SpbParameters params;
  bool hypotheses_hold = false;
  bool bound_respected = false;  // optimal_error >= bound when hypotheses hold
  std::string note;
};
SpbVerification verify_spb(ExponentContext& ctx, const Dmc& w, int n, int message_count,
                           const SpbParameters& params, int64_t budget = int64_t{1} << 24);

/// Text format: "fenc n M |X| |Y|" then per-message input symbols in history
/// rank order.
void write_encoder(std::ostream& out, const FeedbackEncoder& enc);
FeedbackEncoder read_encoder(std::istream& in);
FeedbackEncoder read_encoder_file(const std::string& path);

}  // namespace spb
