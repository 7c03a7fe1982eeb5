#include "biasloop/report/format.hpp"

#include <fmt/format.h>

namespace biasloop::report {

std::string fmt_percent(double value) { return fmt::format("{:.2f}", value); }
std::string fmt_score(double value) { return fmt::format("{:.4f}", value); }
std::string fmt_chi2(double value) { return fmt::format("{:.2f}", value); }

std::string fmt_p(double value) {
  if (value < 1e-18) return "< 1e-18";
  return fmt::format("{:.1e}", value);
}

std::string fmt_beta(double value) { return fmt::format("{:.3f}", value); }
std::string fmt_odds(double value) { return fmt::format("{:.2f}", value); }

std::string fmt_wald_p(double value) {
  if (value < 0.001) return "< 0.001";
  return fmt::format("{:.3f}", value);
}

std::string csv_field(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += csv_field(fields[i]);
  }
  return out + "\n";
}

}  // namespace biasloop::report
