#pragma once

#include <iosfwd>
#include <string>

#include "spb/pmf.hpp"

namespace spb {

/// Reads a channel file:
///   dmc <input_size> <output_size>
///   <row of output_size probabilities per input symbol>
/// '#' starts a comment; blank lines are skipped. Rows are renormalized
/// within the pmf tolerance to absorb decimal rounding.
/// Throws parse_error with line/column diagnostics.
Dmc read_channel(std::istream& in);
Dmc read_channel_file(const std::string& path);

/// Writes the same format with 12 significant digits.
void write_channel(std::ostream& out, const Dmc& w);

}  // namespace spb
