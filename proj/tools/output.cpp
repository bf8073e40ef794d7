#include "output.hpp"

#include <fstream>
#include <iostream>

#include "eatt/error.hpp"

namespace eatt::cli {

void FormatFlags::add_to(CLI::App& cmd) {
  auto* f = cmd.add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json", "text"}));
  auto* c = cmd.add_flag("--csv", csv, "Shorthand for --format csv");
  auto* j = cmd.add_flag("--json", json, "Shorthand for --format json");
  f->excludes(c)->excludes(j);
  c->excludes(j);
}

Format FormatFlags::resolve(Format fallback) const {
  if (csv || format == "csv") return Format::Csv;
  if (json || format == "json") return Format::Json;
  if (format == "text") return Format::Text;
  return fallback;
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void emit(const std::optional<std::string>& path, const std::string& text) {
  if (!path) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(*path);
  if (!out) throw FormatError("cannot write " + *path);
  out << text;
}

}  // namespace eatt::cli
