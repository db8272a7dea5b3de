#ifndef DDT_DATA_CSV_HPP
#define DDT_DATA_CSV_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddt/tensor.hpp"

namespace ddt {
namespace data {

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class ChannelRole { target, covariate_weather, covariate_time };

inline const char* role_name(ChannelRole r) {
    switch (r) {
        case ChannelRole::target: return "target";
        case ChannelRole::covariate_weather: return "covariate_weather";
        case ChannelRole::covariate_time: return "covariate_time";
    }
    return "?";
}

/// Multivariate series batch, values laid out B x L x N. Missing cells are
/// flagged in `missing` and hold NaN sentinels until imputation.
struct SeriesBatch {
    Tensor values;                         // B x L x N
    std::vector<std::int64_t> timestamps;  // L, epoch seconds, strictly increasing
    std::vector<std::string> channel_names;
    std::vector<ChannelRole> roles;        // N
    std::vector<std::uint8_t> missing;     // B*L*N, 1 where value is a sentinel

    std::size_t batch() const { return values.dim(0); }
    std::size_t length() const { return values.dim(1); }
    std::size_t channels() const { return values.dim(2); }

    bool is_missing(std::size_t b, std::size_t t, std::size_t n) const {
        return missing[(b * length() + t) * channels() + n] != 0;
    }
    void set_missing(std::size_t b, std::size_t t, std::size_t n, bool m) {
        missing[(b * length() + t) * channels() + n] = m ? 1 : 0;
        if (m) values.at3(b, t, n) = std::numeric_limits<double>::quiet_NaN();
    }
    std::size_t missing_count() const {
        std::size_t c = 0;
        for (auto m : missing) c += m;
        return c;
    }

    std::vector<std::size_t> channels_with_role(ChannelRole r) const {
        std::vector<std::size_t> idx;
        for (std::size_t n = 0; n < roles.size(); ++n)
            if (roles[n] == r) idx.push_back(n);
        return idx;
    }
};

/// Channel-role assignment for load_csv; unlisted channels default to `target`.
struct CsvSchema {
    std::map<std::string, ChannelRole> roles;
};

namespace detail {

/// RFC-4180 field split: quoted fields, "" escapes, trailing CR stripped.
inline std::vector<std::string> split_csv_line(const std::string& line_in, std::size_t row,
                                               bool& in_quote_error) {
    std::string line = line_in;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"' && cur.empty()) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    in_quote_error = quoted;
    (void)row;
    return fields;
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Parse "YYYY-MM-DD[ HH:MM[:SS]]" into UTC epoch seconds.
inline bool parse_timestamp(const std::string& s, std::int64_t& out) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
    const int n = std::sscanf(s.c_str(), "%d-%d-%d %d:%d:%d", &y, &mo, &d, &h, &mi, &se);
    if (n != 3 && n != 5 && n != 6) return false;
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 || se > 60)
        return false;
    out = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + se;
    return true;
}

inline bool parse_number(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

} // namespace detail

/// Load an ETT-layout CSV (`date,<ch1>,...,<chN>`). Empty cells become
/// missing sentinels; structural problems raise IoError with the row index.
inline SeriesBatch load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("load_csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw IoError("load_csv: '" + path + "' is empty");
    bool quote_err = false;
    std::vector<std::string> header = detail::split_csv_line(line, 0, quote_err);
    if (quote_err) throw IoError("load_csv: unterminated quote in header of '" + path + "'");
    if (header.size() < 2) throw IoError("load_csv: header needs a date column and at least one channel");

    const std::size_t n_ch = header.size() - 1;
    SeriesBatch sb;
    sb.channel_names.assign(header.begin() + 1, header.end());
    for (auto& nm : sb.channel_names) nm = detail::trim(nm);
    sb.roles.resize(n_ch, ChannelRole::target);
    for (std::size_t i = 0; i < n_ch; ++i) {
        auto it = schema.roles.find(sb.channel_names[i]);
        if (it != schema.roles.end()) sb.roles[i] = it->second;
    }

    std::vector<double> vals;
    std::vector<std::uint8_t> miss;
    std::size_t row = 0;
    std::int64_t prev_ts = 0;
    bool have_prev = false;
    std::int64_t step = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        std::vector<std::string> f = detail::split_csv_line(line, row, quote_err);
        if (quote_err) throw IoError("load_csv: row " + std::to_string(row) + ": unterminated quote");
        if (f.size() != header.size())
            throw IoError("load_csv: row " + std::to_string(row) + ": expected " +
                          std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        std::int64_t ts;
        if (!detail::parse_timestamp(detail::trim(f[0]), ts))
            throw IoError("load_csv: row " + std::to_string(row) + ": unparseable timestamp '" + f[0] + "'");
        if (have_prev) {
            if (ts <= prev_ts)
                throw IoError("load_csv: row " + std::to_string(row) +
                              ": timestamps not strictly increasing (" + std::to_string(ts) + " after " +
                              std::to_string(prev_ts) + ")");
            const std::int64_t d = ts - prev_ts;
            if (step == 0)
                step = d;
            else if (d != step)
                throw IoError("load_csv: row " + std::to_string(row) + ": non-uniform time step (" +
                              std::to_string(d) + "s, expected " + std::to_string(step) + "s)");
        }
        prev_ts = ts;
        have_prev = true;
        sb.timestamps.push_back(ts);
        for (std::size_t c = 1; c < f.size(); ++c) {
            const std::string cell = detail::trim(f[c]);
            double v;
            if (cell.empty()) {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                miss.push_back(1);
            } else if (detail::parse_number(cell, v)) {
                vals.push_back(v);
                miss.push_back(0);
            } else {
                throw IoError("load_csv: row " + std::to_string(row) + ": non-numeric value '" + cell +
                              "' in column '" + header[c] + "'");
            }
        }
    }
    if (sb.timestamps.empty()) throw IoError("load_csv: '" + path + "' has no data rows");

    sb.values = Tensor({1, sb.timestamps.size(), n_ch}, std::move(vals));
    sb.missing = std::move(miss);
    return sb;
}

/// Write a SeriesBatch (batch 0) back to ETT-layout CSV.
inline void save_csv(const SeriesBatch& sb, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("save_csv: cannot open '" + path + "' for writing");
    out << "date";
    for (const auto& nm : sb.channel_names) out << "," << nm;
    out << "\n";
    out.precision(17);
    for (std::size_t t = 0; t < sb.length(); ++t) {
        const std::int64_t ts = sb.timestamps[t];
        const std::int64_t days = ts >= 0 ? ts / 86400 : (ts - 86399) / 86400;
        std::int64_t rem = ts - days * 86400;
        // civil date from day count (inverse of days_from_civil)
        std::int64_t z = days + 719468;
        const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02u %02lld:%02lld:%02lld",
                      static_cast<long long>(y + (m <= 2)), m, d, static_cast<long long>(rem / 3600),
                      static_cast<long long>((rem % 3600) / 60), static_cast<long long>(rem % 60));
        out << buf;
        for (std::size_t n = 0; n < sb.channels(); ++n) {
            out << ",";
            if (!sb.is_missing(0, t, n)) out << sb.values.at3(0, t, n);
        }
        out << "\n";
    }
}

} // namespace data
} // namespace ddt

#endif
