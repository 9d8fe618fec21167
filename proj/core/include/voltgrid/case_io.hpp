#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voltgrid/netmodel.hpp"

namespace voltgrid {

enum class CaseFormat { kNative, kMatpower };

struct MatpowerOptions {
  /// Treat nonzero bus susceptances (Bs) as switchable shunts, closed in the
  /// base case. When false they stay fixed bus shunts, which is what the
  /// MATPOWER format itself means.
  bool switched_shunts = false;
  /// Substituted when a bus carries a non-positive baseKV.
  double default_base_kv = 1.0;
};

/// Picks the format from the extension: ".m" is MATPOWER, anything else native.
CaseFormat detect_format(const std::filesystem::path& path);

/// Reads, validates and types a case. Throws ParseError, ValidationError or
/// IslandedError.
NetworkCase load_case(const std::filesystem::path& path, CaseFormat format,
                      const MatpowerOptions& options = {});

NetworkCase parse_native(std::string_view text, const std::string& name = {});
NetworkCase parse_matpower(std::string_view text, const std::string& name = {},
                           const MatpowerOptions& options = {});

/// Runs validation and bus typing on an in-memory case, throwing on failure.
void finalize_case(NetworkCase& net);

std::string to_native(const NetworkCase& net);
void write_native(const NetworkCase& net, const std::filesystem::path& path);

}  // namespace voltgrid
