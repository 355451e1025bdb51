#include "spb/channel_io.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace spb {

namespace {

// Whitespace/comment-aware tokenizer that tracks line and column.
class Tokenizer {
 public:
  explicit Tokenizer(std::istream& in) : in_(in) {}

  struct Token {
    std::string text;
    int line = 0;
    int column = 0;
  };

  bool next(Token& tok) {
    skip_space_and_comments();
    if (peek() == EOF) return false;
    tok.line = line_;
    tok.column = column_;
    tok.text.clear();
    while (peek() != EOF && !std::isspace(peek()) && peek() != '#') tok.text.push_back(take());
    return true;
  }

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int peek() { return in_.peek(); }
  char take() {
    int c = in_.get();
    if (c == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    return static_cast<char>(c);
  }
  void skip_space_and_comments() {
    for (;;) {
      int c = peek();
      if (c == '#') {
        while (peek() != EOF && peek() != '\n') take();
      } else if (c != EOF && std::isspace(c)) {
        take();
      } else {
        return;
      }
    }
  }

  std::istream& in_;
  int line_ = 1;
  int column_ = 1;
};

Tokenizer::Token expect(Tokenizer& tz, const char* what) {
  Tokenizer::Token tok;
  if (!tz.next(tok)) throw parse_error(std::string("expected ") + what + ", got end of input",
                                       tz.line(), tz.column());
  return tok;
}

long parse_long(const Tokenizer::Token& tok, const char* what) {
  long v = 0;
  auto [p, ec] = std::from_chars(tok.text.data(), tok.text.data() + tok.text.size(), v);
  if (ec != std::errc() || p != tok.text.data() + tok.text.size())
    throw parse_error(std::string("expected ") + what + ", got '" + tok.text + "'", tok.line,
                      tok.column);
  return v;
}

double parse_double(const Tokenizer::Token& tok) {
  try {
    size_t used = 0;
    double v = std::stod(tok.text, &used);
    if (used != tok.text.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw parse_error("expected a probability, got '" + tok.text + "'", tok.line, tok.column);
  }
}

}  // namespace

Dmc read_channel(std::istream& in) {
  Tokenizer tz(in);
  Tokenizer::Token tok = expect(tz, "'dmc' header");
  if (tok.text != "dmc")
    throw parse_error("expected 'dmc' header, got '" + tok.text + "'", tok.line, tok.column);
  long in_size = parse_long(expect(tz, "input size"), "input size");
  long out_size = parse_long(expect(tz, "output size"), "output size");
  if (in_size < 1 || out_size < 1)
    throw parse_error("channel dimensions must be positive", tok.line, tok.column);
  if (in_size * out_size > (1l << 24))
    throw parse_error("channel too large", tok.line, tok.column);

  std::vector<double> w;
  w.reserve(static_cast<size_t>(in_size * out_size));
  for (long i = 0; i < in_size * out_size; ++i) {
    Tokenizer::Token t = expect(tz, "probability entry");
    double v = parse_double(t);
    if (!(v >= 0.0))
      throw parse_error("probability entry must be non-negative", t.line, t.column);
    w.push_back(v);
  }
  Tokenizer::Token extra;
  if (tz.next(extra))
    throw parse_error("unexpected trailing token '" + extra.text + "'", extra.line, extra.column);
  try {
    return Dmc::validated(static_cast<int>(in_size), static_cast<int>(out_size), std::move(w),
                          /*renormalize=*/true);
  } catch (const std::invalid_argument& e) {
    throw parse_error(e.what(), tz.line(), tz.column());
  }
}

Dmc read_channel_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open channel file: " + path);
  return read_channel(f);
}

void write_channel(std::ostream& out, const Dmc& w) {
  out << "dmc " << w.input_size() << ' ' << w.output_size() << '\n';
  for (int x = 0; x < w.input_size(); ++x) {
    auto r = w.row(x);
    for (int y = 0; y < w.output_size(); ++y) {
      if (y) out << ' ';
      out << fmt12(r[y]);
    }
    out << '\n';
  }
}

}  // namespace spb
