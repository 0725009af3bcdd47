#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace gsde {

/// Minimal RFC-4180 writer: CRLF records, quoted text fields when needed,
/// and doubles in shortest round-trip form (locale independent).
class CsvWriter {
public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& header(const std::vector<std::string>& names)
    {
        for (const auto& name : names) field(std::string_view(name));
        return end_row();
    }

    CsvWriter& field(double value)
    {
        char buf[64];
        const auto res = std::to_chars(buf, buf + sizeof(buf), value);
        return raw(std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)));
    }

    CsvWriter& field(std::int64_t value) { return raw(std::to_string(value)); }
    CsvWriter& field(std::uint64_t value) { return raw(std::to_string(value)); }
    CsvWriter& field(int value) { return raw(std::to_string(value)); }

    CsvWriter& field(std::string_view text)
    {
        if (text.find_first_of(",\"\r\n") == std::string_view::npos) return raw(text);
        std::string quoted = "\"";
        for (const char c : text) {
            if (c == '"') quoted += '"';
            quoted += c;
        }
        quoted += '"';
        return raw(quoted);
    }

    CsvWriter& end_row()
    {
        out_ << "\r\n";
        first_ = true;
        return *this;
    }

private:
    CsvWriter& raw(std::string_view text)
    {
        if (!first_) out_ << ',';
        out_ << text;
        first_ = false;
        return *this;
    }

    std::ostream& out_;
    bool first_ = true;
};

/// Parses a CSV produced by CsvWriter (numeric cells only after the header).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

CsvTable read_numeric_csv(std::istream& in);

} // namespace gsde
