#include "voltgrid/case_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <sstream>

#include "voltgrid/error.hpp"

namespace voltgrid {

using nlohmann::json;

namespace {

constexpr const char* kNativeTag = "voltgrid-case";
constexpr int kNativeVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::pair<int, int> line_column(std::string_view text, std::size_t offset) {
  int line = 1;
  int column = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

// --- native ---------------------------------------------------------------

template <typename T>
T field(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const json& obj, const std::string& key, const std::string& where,
           T fallback) {
  return obj.contains(key) ? field<T>(obj, key, where) : fallback;
}

const json& array_field(const json& doc, const std::string& key) {
  auto it = doc.find(key);
  if (it == doc.end()) throw ParseError("case: missing array '" + key + "'");
  if (!it->is_array()) throw ParseError("case: '" + key + "' must be an array");
  return *it;
}

// --- MATPOWER ---------------------------------------------------------------

struct MatrixRow {
  std::vector<double> values;
  int line = 0;
};

// Column positions in the MATPOWER version-2 layout.
namespace bus_col {
constexpr std::size_t kId = 0, kType = 1, kPd = 2, kQd = 3, kGs = 4, kBs = 5,
                      kVm = 7, kVa = 8, kBaseKv = 9, kCount = 10;
}
namespace gen_col {
constexpr std::size_t kBus = 0, kPg = 1, kQmax = 3, kQmin = 4, kVg = 5,
                      kStatus = 7, kPmax = 8, kPmin = 9, kCount = 10;
}
namespace branch_col {
constexpr std::size_t kFrom = 0, kTo = 1, kR = 2, kX = 3, kB = 4, kTap = 8,
                      kStatus = 10, kCount = 11;
}

std::string_view strip_comment(std::string_view line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\'') quoted = !quoted;
    if (line[i] == '%' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

double parse_number(std::string_view token, int line, int column) {
  std::string_view body = token;
  bool negative = false;
  if (!body.empty() && (body.front() == '-' || body.front() == '+')) {
    negative = body.front() == '-';
    body.remove_prefix(1);
  }
  if (body == "Inf" || body == "inf") {
    return negative ? -std::numeric_limits<double>::infinity()
                    : std::numeric_limits<double>::infinity();
  }
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
  if (ec != std::errc() || ptr != body.data() + body.size()) {
    throw ParseError("invalid number '" + std::string(token) + "'", line, column);
  }
  return negative ? -value : value;
}

// Position just past "mpc.<name> =" on the line, or npos.
std::size_t match_assignment(std::string_view line, std::string_view name) {
  std::size_t i = line.find_first_not_of(" \t");
  if (i == std::string_view::npos) return i;
  const std::string head = "mpc." + std::string(name);
  if (line.substr(i, head.size()) != head) return std::string_view::npos;
  i += head.size();
  i = line.find_first_not_of(" \t", i);
  if (i == std::string_view::npos || line[i] != '=') return std::string_view::npos;
  return i + 1;
}

std::optional<std::vector<MatrixRow>> read_matrix(
    const std::vector<std::string_view>& lines, std::string_view name) {
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = strip_comment(lines[li]);
    std::size_t at = match_assignment(line, name);
    if (at == std::string_view::npos) continue;
    const int decl_line = static_cast<int>(li) + 1;
    at = line.find_first_not_of(" \t", at);
    if (at == std::string_view::npos || line[at] != '[') {
      throw ParseError("expected '[' after mpc." + std::string(name), decl_line,
                       static_cast<int>(at == std::string_view::npos
                                            ? line.size() + 1
                                            : at + 1));
    }
    std::vector<MatrixRow> rows;
    MatrixRow current;
    std::size_t pos = at + 1;
    for (std::size_t lj = li; lj < lines.size(); ++lj) {
      std::string_view body = strip_comment(lines[lj]);
      const int line_no = static_cast<int>(lj) + 1;
      if (lj != li) pos = 0;
      while (pos < body.size()) {
        const char c = body[pos];
        if (c == ' ' || c == '\t' || c == ',') {
          ++pos;
        } else if (c == ';' || c == ']') {
          if (!current.values.empty()) rows.push_back(std::move(current));
          current = MatrixRow{};
          ++pos;
          if (c == ']') return rows;
        } else {
          std::size_t end = body.find_first_of(" \t,;]", pos);
          if (end == std::string_view::npos) end = body.size();
          if (current.values.empty()) current.line = line_no;
          current.values.push_back(parse_number(body.substr(pos, end - pos),
                                                line_no,
                                                static_cast<int>(pos) + 1));
          pos = end;
        }
      }
      // A newline also terminates a matrix row.
      if (!current.values.empty()) {
        rows.push_back(std::move(current));
        current = MatrixRow{};
      }
    }
    throw ParseError("unterminated matrix mpc." + std::string(name), decl_line, 1);
  }
  return std::nullopt;
}

std::optional<double> read_scalar(const std::vector<std::string_view>& lines,
                                  std::string_view name) {
  for (std::size_t li = 0; li < lines.size(); ++li) {
    std::string_view line = strip_comment(lines[li]);
    std::size_t at = match_assignment(line, name);
    if (at == std::string_view::npos) continue;
    at = line.find_first_not_of(" \t", at);
    std::size_t end = line.find_first_of(" \t;", at);
    if (end == std::string_view::npos) end = line.size();
    if (at == std::string_view::npos || at >= end) {
      throw ParseError("missing value for mpc." + std::string(name),
                       static_cast<int>(li) + 1);
    }
    return parse_number(line.substr(at, end - at), static_cast<int>(li) + 1,
                        static_cast<int>(at) + 1);
  }
  return std::nullopt;
}

void require_columns(const MatrixRow& row, std::size_t count,
                     std::string_view name) {
  if (row.values.size() < count) {
    throw ParseError("mpc." + std::string(name) + " row has " +
                         std::to_string(row.values.size()) + " columns, need " +
                         std::to_string(count),
                     row.line, 1);
  }
}

int as_id(double v, const MatrixRow& row) {
  if (v != std::floor(v)) throw ParseError("non-integer bus number", row.line, 1);
  return static_cast<int>(v);
}

}  // namespace

CaseFormat detect_format(const std::filesystem::path& path) {
  return path.extension() == ".m" ? CaseFormat::kMatpower : CaseFormat::kNative;
}

void finalize_case(NetworkCase& net) {
  auto violations = validate_structure(net);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  assign_bus_types(net);
  auto isolated = islanded_equipment(net);
  if (!isolated.empty()) throw IslandedError(std::move(isolated));
}

NetworkCase load_case(const std::filesystem::path& path, CaseFormat format,
                      const MatpowerOptions& options) {
  const std::string text = read_file(path);
  const std::string name = path.stem().string();
  return format == CaseFormat::kMatpower ? parse_matpower(text, name, options)
                                         : parse_native(text, name);
}

NetworkCase parse_native(std::string_view text, const std::string& name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte is 1-based and points just past the offending character.
    const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
    auto [line, column] = line_column(text, offset);
    std::string what = e.what();
    if (auto p = what.find("; "); p != std::string::npos) what = what.substr(p + 2);
    throw ParseError(what, line, column);
  }
  if (!doc.is_object()) throw ParseError("case document must be an object", 1, 1);
  if (doc.value("format", std::string{}) != kNativeTag) {
    throw ParseError("case: 'format' must be \"" + std::string(kNativeTag) + "\"");
  }
  if (doc.value("version", 0) != kNativeVersion) {
    throw ParseError("case: unsupported version");
  }

  NetworkCase net;
  net.name = field_or<std::string>(doc, "name", "case", name);
  net.base_mva = field<double>(doc, "base_mva", "case");
  net.slack_bus = field<int>(doc, "slack_bus", "case");

  const auto& buses = array_field(doc, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string where = "buses[" + std::to_string(i) + "]";
    const auto& b = buses[i];
    Bus bus;
    bus.id = field<int>(b, "id", where);
    bus.base_kv = field<double>(b, "base_kv", where);
    bus.v_init = field_or<double>(b, "v_init", where, 1.0);
    bus.angle_init = field_or<double>(b, "angle_init", where, 0.0);
    bus.gs_mw = field_or<double>(b, "gs_mw", where, 0.0);
    bus.bs_mvar = field_or<double>(b, "bs_mvar", where, 0.0);
    net.buses.push_back(bus);
  }
  const auto& branches = array_field(doc, "branches");
  for (std::size_t i = 0; i < branches.size(); ++i) {
    const std::string where = "branches[" + std::to_string(i) + "]";
    const auto& b = branches[i];
    Branch br;
    br.from_bus = field<int>(b, "from_bus", where);
    br.to_bus = field<int>(b, "to_bus", where);
    br.r = field<double>(b, "r", where);
    br.x = field<double>(b, "x", where);
    br.b_charging = field_or<double>(b, "b_charging", where, 0.0);
    br.tap_ratio = field_or<double>(b, "tap_ratio", where, 1.0);
    br.in_service = field_or<bool>(b, "in_service", where, true);
    net.branches.push_back(br);
  }
  const auto& gens = array_field(doc, "generators");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string where = "generators[" + std::to_string(i) + "]";
    const auto& g = gens[i];
    Generator gen;
    gen.bus = field<int>(g, "bus", where);
    gen.p_mw = field_or<double>(g, "p_mw", where, 0.0);
    gen.p_min = field<double>(g, "p_min", where);
    gen.p_max = field<double>(g, "p_max", where);
    gen.q_min = field<double>(g, "q_min", where);
    gen.q_max = field<double>(g, "q_max", where);
    gen.v_setpoint = field<double>(g, "v_setpoint", where);
    gen.in_service = field_or<bool>(g, "in_service", where, true);
    net.generators.push_back(gen);
  }
  const auto& loads = array_field(doc, "loads");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string where = "loads[" + std::to_string(i) + "]";
    net.loads.push_back(Load{field<int>(loads[i], "bus", where),
                             field<double>(loads[i], "p", where),
                             field<double>(loads[i], "q", where)});
  }
  if (doc.contains("shunts")) {
    const auto& shunts = array_field(doc, "shunts");
    for (std::size_t i = 0; i < shunts.size(); ++i) {
      const std::string where = "shunts[" + std::to_string(i) + "]";
      net.shunts.push_back(Shunt{field<int>(shunts[i], "bus", where),
                                 field<double>(shunts[i], "q_nominal", where),
                                 field<bool>(shunts[i], "closed", where)});
    }
  }
  finalize_case(net);
  return net;
}

NetworkCase parse_matpower(std::string_view text, const std::string& name,
                           const MatpowerOptions& options) {
  const auto lines = split_lines(text);
  NetworkCase net;
  net.name = name;
  net.base_mva = read_scalar(lines, "baseMVA").value_or(100.0);

  auto bus_rows = read_matrix(lines, "bus");
  auto gen_rows = read_matrix(lines, "gen");
  auto branch_rows = read_matrix(lines, "branch");
  if (!bus_rows) throw ParseError("missing matrix mpc.bus");
  if (!gen_rows) throw ParseError("missing matrix mpc.gen");
  if (!branch_rows) throw ParseError("missing matrix mpc.branch");

  std::vector<int> slack_ids;
  for (const auto& row : *bus_rows) {
    require_columns(row, bus_col::kCount, "bus");
    const auto& v = row.values;
    Bus bus;
    bus.id = as_id(v[bus_col::kId], row);
    bus.base_kv = v[bus_col::kBaseKv] > 0.0 ? v[bus_col::kBaseKv]
                                            : options.default_base_kv;
    bus.v_init = v[bus_col::kVm];
    bus.angle_init = v[bus_col::kVa] * std::numbers::pi / 180.0;
    bus.gs_mw = v[bus_col::kGs];
    if (static_cast<int>(v[bus_col::kType]) == 3) {
      bus.type = BusType::kSlack;
      slack_ids.push_back(bus.id);
    }
    const double bs = v[bus_col::kBs];
    if (bs != 0.0 && options.switched_shunts) {
      net.shunts.push_back(Shunt{bus.id, bs, true});
    } else {
      bus.bs_mvar = bs;
    }
    if (v[bus_col::kPd] != 0.0 || v[bus_col::kQd] != 0.0) {
      net.loads.push_back(Load{bus.id, v[bus_col::kPd], v[bus_col::kQd]});
    }
    net.buses.push_back(bus);
  }
  if (!slack_ids.empty()) net.slack_bus = slack_ids.front();

  // Generators sharing a bus collapse into one equivalent unit.
  std::map<int, std::size_t> merged;
  std::vector<bool> any_online;
  for (const auto& row : *gen_rows) {
    require_columns(row, gen_col::kCount, "gen");
    const auto& v = row.values;
    Generator g;
    g.bus = as_id(v[gen_col::kBus], row);
    g.p_mw = v[gen_col::kPg];
    g.p_min = v[gen_col::kPmin];
    g.p_max = v[gen_col::kPmax];
    g.q_min = v[gen_col::kQmin];
    g.q_max = v[gen_col::kQmax];
    g.v_setpoint = v[gen_col::kVg];
    g.in_service = v[gen_col::kStatus] > 0.0;
    auto it = merged.find(g.bus);
    if (it == merged.end()) {
      merged.emplace(g.bus, net.generators.size());
      net.generators.push_back(g);
      continue;
    }
    Generator& into = net.generators[it->second];
    if (g.in_service && !into.in_service) {
      // An online unit replaces offline ones entirely.
      into = g;
    } else if (g.in_service == into.in_service) {
      into.p_mw += g.p_mw;
      into.p_min += g.p_min;
      into.p_max += g.p_max;
      into.q_min += g.q_min;
      into.q_max += g.q_max;
    }
  }

  for (const auto& row : *branch_rows) {
    require_columns(row, branch_col::kCount, "branch");
    const auto& v = row.values;
    Branch br;
    br.from_bus = as_id(v[branch_col::kFrom], row);
    br.to_bus = as_id(v[branch_col::kTo], row);
    br.r = v[branch_col::kR];
    br.x = v[branch_col::kX];
    br.b_charging = v[branch_col::kB];
    br.tap_ratio = v[branch_col::kTap] == 0.0 ? 1.0 : v[branch_col::kTap];
    br.in_service = v[branch_col::kStatus] > 0.0;
    net.branches.push_back(br);
  }

  auto violations = validate_structure(net);
  if (!violations.empty()) throw ValidationError(std::move(violations));
  finalize_case(net);
  return net;
}

std::string to_native(const NetworkCase& net) {
  json doc;
  doc["format"] = kNativeTag;
  doc["version"] = kNativeVersion;
  doc["name"] = net.name;
  doc["base_mva"] = net.base_mva;
  doc["slack_bus"] = net.slack_bus;
  json buses = json::array();
  for (const auto& b : net.buses) {
    buses.push_back({{"id", b.id},
                     {"base_kv", b.base_kv},
                     {"v_init", b.v_init},
                     {"angle_init", b.angle_init},
                     {"gs_mw", b.gs_mw},
                     {"bs_mvar", b.bs_mvar}});
  }
  json branches = json::array();
  for (const auto& br : net.branches) {
    branches.push_back({{"from_bus", br.from_bus},
                        {"to_bus", br.to_bus},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charging", br.b_charging},
                        {"tap_ratio", br.tap_ratio},
                        {"in_service", br.in_service}});
  }
  json gens = json::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"bus", g.bus},
                    {"p_mw", g.p_mw},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"q_min", g.q_min},
                    {"q_max", g.q_max},
                    {"v_setpoint", g.v_setpoint},
                    {"in_service", g.in_service}});
  }
  json loads = json::array();
  for (const auto& l : net.loads) {
    loads.push_back({{"bus", l.bus}, {"p", l.p}, {"q", l.q}});
  }
  json shunts = json::array();
  for (const auto& s : net.shunts) {
    shunts.push_back(
        {{"bus", s.bus}, {"q_nominal", s.q_nominal}, {"closed", s.closed}});
  }
  doc["buses"] = std::move(buses);
  doc["branches"] = std::move(branches);
  doc["generators"] = std::move(gens);
  doc["loads"] = std::move(loads);
  doc["shunts"] = std::move(shunts);
  return doc.dump(1) + "\n";
}

void write_native(const NetworkCase& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_native(net);
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace voltgrid
