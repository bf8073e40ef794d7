#pragma once

#include <optional>
#include <string>

#include "CLI11.hpp"

namespace eatt::cli {

enum class Format { Csv, Json, Text };

// --format csv|json|text plus the --csv / --json shorthands. The three are
// mutually exclusive.
struct FormatFlags {
  std::string format;
  bool csv = false;
  bool json = false;

  void add_to(CLI::App& cmd);
  Format resolve(Format fallback) const;
};

// Quotes a CSV field that contains a comma, quote or newline.
std::string csv_field(const std::string& value);

// Writes `text` to `path`, or stdout when no path was given.
void emit(const std::optional<std::string>& path, const std::string& text);

}  // namespace eatt::cli
