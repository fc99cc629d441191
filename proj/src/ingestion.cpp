#include "mpc/ingestion.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace mpc {
namespace {

constexpr std::array<std::string_view, 9> kColumns = {
    "order_id", "ev_id", "fcs_id", "timestamp", "energy_kwh",
    "soc_pct",  "current_a", "voltage_v", "temp_c"};

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? line.npos : pos - start);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\r')) field.remove_suffix(1);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    out.emplace_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_number(std::string_view text) {
  if (text.empty()) return std::nullopt;
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view text) {
  Int v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) return std::nullopt;
  return v;
}

struct RawOrder {
  ChargingOrder order;
  std::vector<std::size_t> lines;
  std::string quarantine_reason;
};

}  // namespace

std::optional<std::int64_t> parse_timestamp(std::string_view text) {
  if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':' || text[16] != ':') {
    return std::nullopt;
  }
  const auto rest = text.substr(19);
  if (!(rest.empty() || rest == "Z" || rest == "+00:00")) return std::nullopt;
  const auto y = parse_int<int>(text.substr(0, 4));
  const auto mo = parse_int<unsigned>(text.substr(5, 2));
  const auto d = parse_int<unsigned>(text.substr(8, 2));
  const auto h = parse_int<int>(text.substr(11, 2));
  const auto mi = parse_int<int>(text.substr(14, 2));
  const auto s = parse_int<int>(text.substr(17, 2));
  if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{*y}, month{*mo}, day{*d}};
  if (!ymd.ok() || *h > 23 || *mi > 59 || *s > 60) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<std::int64_t>(days) * 86400 + *h * 3600 + *mi * 60 + *s;
}

std::string format_timestamp(std::int64_t seconds) {
  using namespace std::chrono;
  auto days = seconds / 86400;
  auto rem = seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw InvariantError("double formatting failed");
  return std::string(buf, ptr);
}

ParseResult parse_orders(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open orders file " + path.string());
  return parse_orders(in);
}

ParseResult parse_orders(std::istream& in) {
  ParseResult result;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("orders file is empty");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  result.header = split_csv_line(line);

  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(result.header.begin(), result.header.end(), kColumns[c]);
    if (it == result.header.end()) {
      throw SchemaError("orders file is missing column '" + std::string(kColumns[c]) + "'");
    }
    col[c] = static_cast<std::size_t>(it - result.header.begin());
  }
  const auto bt_it = std::find(result.header.begin(), result.header.end(), "battery_type");
  const std::optional<std::size_t> battery_col =
      bt_it == result.header.end()
          ? std::nullopt
          : std::optional<std::size_t>(static_cast<std::size_t>(bt_it - result.header.begin()));

  std::vector<RawOrder> raw;
  std::unordered_map<std::string, std::size_t> index;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    auto reject = [&](std::string reason) {
      result.rejects.push_back({line_no, std::move(fields), std::move(reason)});
    };
    if (fields.size() != result.header.size()) {
      reject("wrong field count");
      continue;
    }
    const auto& order_id = fields[col[0]];
    if (order_id.empty() || fields[col[1]].empty() || fields[col[2]].empty()) {
      reject("missing identifier");
      continue;
    }
    const auto ts = parse_timestamp(fields[col[3]]);
    if (!ts) {
      reject("bad timestamp");
      continue;
    }
    const auto energy = parse_number(fields[col[4]]);
    const auto soc = parse_number(fields[col[5]]);
    const auto current = parse_number(fields[col[6]]);
    const auto voltage = parse_number(fields[col[7]]);
    const auto temp = parse_number(fields[col[8]]);
    if (!energy || !soc || !current || !voltage || !temp) {
      reject("non-numeric field");
      continue;
    }
    if (*soc != std::floor(*soc)) {
      reject("fractional SOC");
      continue;
    }
    if (*soc < 0.0 || *soc > 100.0) {
      reject("SOC out of range");
      continue;
    }

    auto [it, inserted] = index.try_emplace(order_id, raw.size());
    if (inserted) {
      RawOrder r;
      r.order.order_id = order_id;
      r.order.ev_id = fields[col[1]];
      r.order.fcs_id = fields[col[2]];
      if (battery_col) r.order.battery_type = fields[*battery_col];
      raw.push_back(std::move(r));
    }
    auto& r = raw[it->second];
    if (r.order.ev_id != fields[col[1]] || r.order.fcs_id != fields[col[2]]) {
      r.quarantine_reason = "inconsistent ev_id/fcs_id within order";
    }
    r.order.points.push_back(ChargingPoint{*ts, *energy, static_cast<int>(*soc), *current,
                                           *voltage, *temp});
    r.lines.push_back(line_no);
  }

  for (auto& r : raw) {
    auto& pts = r.order.points;
    std::stable_sort(pts.begin(), pts.end(),
                     [](const ChargingPoint& a, const ChargingPoint& b) { return a.timestamp < b.timestamp; });
    std::string reason = r.quarantine_reason;
    if (reason.empty() && pts.size() < 2) reason = "fewer than 2 points";
    for (std::size_t i = 1; reason.empty() && i < pts.size(); ++i) {
      if (pts[i].timestamp <= pts[i - 1].timestamp) reason = "duplicate timestamp";
      else if (pts[i].energy_kwh < pts[i - 1].energy_kwh) reason = "non-monotone energy";
      else if (pts[i].soc_pct < pts[i - 1].soc_pct) reason = "non-monotone SOC";
    }
    if (!reason.empty()) {
      result.quarantined.push_back({r.order.order_id, reason});
      continue;
    }
    result.orders.push_back(std::move(r.order));
  }
  return result;
}

std::vector<std::pair<std::size_t, std::size_t>> current_runs(const ChargingOrder& order,
                                                              double current_pp_threshold_a) {
  std::vector<std::pair<std::size_t, std::size_t>> runs;
  const auto& pts = order.points;
  std::size_t start = 0;
  while (start < pts.size()) {
    double lo = pts[start].current_a;
    double hi = lo;
    std::size_t end = start;
    while (end + 1 < pts.size()) {
      const double c = pts[end + 1].current_a;
      const double nlo = std::min(lo, c);
      const double nhi = std::max(hi, c);
      if (nhi - nlo > current_pp_threshold_a) break;
      lo = nlo;
      hi = nhi;
      ++end;
    }
    runs.emplace_back(start, end);
    start = end + 1;
  }
  return runs;
}

std::vector<ChargingSegment> segment_order(const ChargingOrder& order,
                                           double current_pp_threshold_a) {
  std::vector<ChargingSegment> segments;
  const auto& pts = order.points;
  int index = 0;
  for (const auto& [first, last] : current_runs(order, current_pp_threshold_a)) {
    if (last == first) continue;
    const auto& p0 = pts[first];
    const auto& pn = pts[last];
    const int dsoc = pn.soc_pct - p0.soc_pct;
    const double de = pn.energy_kwh - p0.energy_kwh;
    if (dsoc < 1 || !(de > 0.0)) continue;

    ChargingSegment seg;
    seg.ev_id = order.ev_id;
    seg.fcs_id = order.fcs_id;
    seg.order_id = order.order_id;
    seg.segment_index = index++;
    seg.first_point = first;
    seg.last_point = last;
    seg.order_start = pts.front().timestamp;
    seg.battery_type = order.battery_type;
    seg.delta_energy_kwh = de;
    seg.delta_soc_pct = dsoc;
    seg.start_soc_pct = p0.soc_pct;
    seg.end_soc_pct = pn.soc_pct;
    double lo = p0.current_a, hi = p0.current_a, sum_i = 0.0, sum_t = 0.0, sum_u = 0.0;
    for (std::size_t i = first; i <= last; ++i) {
      lo = std::min(lo, pts[i].current_a);
      hi = std::max(hi, pts[i].current_a);
      sum_i += pts[i].current_a;
      sum_t += pts[i].temp_c;
      sum_u += pts[i].voltage_v;
    }
    const double n = static_cast<double>(last - first + 1);
    seg.mean_current_a = sum_i / n;
    seg.peak_to_peak_current_a = hi - lo;
    seg.mean_temp_c = sum_t / n;
    seg.mean_voltage_v = sum_u / n;
    seg.point_series.reserve(last - first);
    for (std::size_t i = first + 1; i <= last; ++i) {
      seg.point_series.push_back({pts[i].soc_pct - p0.soc_pct, pts[i].energy_kwh - p0.energy_kwh});
    }
    segments.push_back(std::move(seg));
  }
  return segments;
}

void write_orders_csv(std::ostream& out, const std::vector<ChargingOrder>& orders,
                      bool with_battery_type) {
  out << kOrderCsvHeader << (with_battery_type ? ",battery_type\n" : "\n");
  for (const auto& o : orders) {
    for (const auto& p : o.points) {
      out << o.order_id << ',' << o.ev_id << ',' << o.fcs_id << ',' << format_timestamp(p.timestamp)
          << ',' << format_double(p.energy_kwh) << ',' << p.soc_pct << ','
          << format_double(p.current_a) << ',' << format_double(p.voltage_v) << ','
          << format_double(p.temp_c);
      if (with_battery_type) out << ',' << o.battery_type;
      out << '\n';
    }
  }
}

void write_rejects_csv(std::ostream& out, const ParseResult& parsed) {
  for (std::size_t i = 0; i < parsed.header.size(); ++i) out << parsed.header[i] << ',';
  out << "reject_reason\n";
  for (const auto& r : parsed.rejects) {
    for (const auto& f : r.fields) out << f << ',';
    out << r.reason << '\n';
  }
}

void write_quarantine_csv(std::ostream& out, const std::vector<QuarantinedOrder>& quarantined) {
  out << "order_id,reason\n";
  for (const auto& q : quarantined) out << q.order_id << ',' << q.reason << '\n';
}

}  // namespace mpc
