#pragma once

#include <ostream>
#include <string>
#include <string_view>

namespace orl {

/// Shortest round-trip decimal form of a double; "nan" / "inf" / "-inf" for
/// non-finite values.
std::string format_double(double value);

/// Minimal row writer: fields are separated by commas, rows end with '\n'.
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value) { return field(format_double(value)); }
    CsvWriter& field(long long value) { return field(std::to_string(value)); }
    CsvWriter& field(int value) { return field(std::to_string(value)); }
    CsvWriter& field(std::size_t value) { return field(std::to_string(value)); }
    void end_row();

private:
    std::ostream& out_;
    bool first_ = true;
};

}  // namespace orl
