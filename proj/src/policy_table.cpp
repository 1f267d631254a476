#include "reservoir/policy_table.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "reservoir/errors.hpp"

namespace reservoir {

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

void write_policy_csv(std::ostream& os, const std::vector<PolicyRow>& rows) {
    os << "storage,step,q,q_tr,next_storage\n";
    for (const auto& r : rows)
        os << format_number(r.storage) << ',' << r.step << ',' << format_number(r.q) << ','
           << format_number(r.q_tr) << ',' << format_number(r.next_storage) << '\n';
}

namespace {

template <class T>
T parse_field(const std::string& text, std::size_t line, const char* name) {
    T v{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw DataError(std::string("bad ") + name + " '" + text + "'", line);
    return v;
}

}  // namespace

std::vector<PolicyRow> read_policy_csv(std::istream& is) {
    std::vector<PolicyRow> rows;
    std::string line;
    std::size_t n = 0;
    if (!std::getline(is, line)) throw DataError("empty policy file", 1);
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "storage,step,q,q_tr,next_storage") throw DataError("unexpected policy header", 1);
    while (std::getline(is, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw DataError("expected 5 fields, got " + std::to_string(f.size()), n);
        PolicyRow r;
        r.storage = parse_field<double>(f[0], n, "storage");
        r.step = parse_field<int>(f[1], n, "step");
        r.q = parse_field<double>(f[2], n, "q");
        r.q_tr = parse_field<double>(f[3], n, "q_tr");
        r.next_storage = parse_field<double>(f[4], n, "next_storage");
        rows.push_back(r);
    }
    return rows;
}

}  // namespace reservoir
