#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace biasloop::report {

std::string fmt_percent(double value);  // 70.65
std::string fmt_score(double value);    // kappa, Jaccard: 0.4286
std::string fmt_chi2(double value);     // 33.33
std::string fmt_p(double value);        // 1.2e-04, "< 1e-18" below that
std::string fmt_beta(double value);     // -0.728
std::string fmt_odds(double value);     // 0.48
std::string fmt_wald_p(double value);   // 0.584, "< 0.001"

// RFC 4180 quoting when the field holds a comma, quote or newline.
std::string csv_field(std::string_view field);
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace biasloop::report
