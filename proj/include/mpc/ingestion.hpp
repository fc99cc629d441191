#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mpc/core_model.hpp"

namespace mpc {

/// Required header of the charging-order CSV, in order. An optional trailing
/// `battery_type` column is accepted.
inline constexpr std::string_view kOrderCsvHeader =
    "order_id,ev_id,fcs_id,timestamp,energy_kwh,soc_pct,current_a,voltage_v,temp_c";

struct RejectedRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
  std::string reason;
};

struct QuarantinedOrder {
  std::string order_id;
  std::string reason;
};

struct ParseResult {
  std::vector<std::string> header;
  std::vector<ChargingOrder> orders;  // in order of first appearance
  std::vector<RejectedRow> rejects;
  std::vector<QuarantinedOrder> quarantined;
};

/// Reads a charging-order CSV. Throws SchemaError when a required column is
/// missing; everything else is reported through rejects/quarantined.
ParseResult parse_orders(const std::filesystem::path& path);
ParseResult parse_orders(std::istream& in);

/// "YYYY-MM-DDTHH:MM:SS" (T or space) with an optional "Z" or "+00:00" suffix.
std::optional<std::int64_t> parse_timestamp(std::string_view text);
std::string format_timestamp(std::int64_t seconds);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// Maximal runs of points whose current peak-to-peak stays within the
/// threshold, scanned greedily left to right. Inclusive index ranges.
std::vector<std::pair<std::size_t, std::size_t>> current_runs(const ChargingOrder& order,
                                                              double current_pp_threshold_a);

/// Cuts an order into constant-current segments. Runs without any SOC gain or
/// energy are dropped.
std::vector<ChargingSegment> segment_order(const ChargingOrder& order,
                                           double current_pp_threshold_a);

void write_orders_csv(std::ostream& out, const std::vector<ChargingOrder>& orders,
                      bool with_battery_type);
void write_rejects_csv(std::ostream& out, const ParseResult& parsed);
void write_quarantine_csv(std::ostream& out, const std::vector<QuarantinedOrder>& quarantined);

}  // namespace mpc
