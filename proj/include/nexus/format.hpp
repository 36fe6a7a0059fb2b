#pragma once

#include <string>
#include <string_view>

namespace nexus {

/// Shortest decimal that reads back to the same double. Non-finite values
/// are written as "nan", "inf" and "-inf".
std::string format_double(double v);

/// Quotes a CSV field when it contains a comma, quote or newline.
std::string csv_field(std::string_view s);

}  // namespace nexus
