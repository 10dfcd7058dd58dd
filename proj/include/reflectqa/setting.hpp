#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace reflectqa {

enum class PipelineSetting { Single, TwoAgent, ThreeAgent };

/// Which questions go through the critic stage of a batch run.
///   Oracle - only questions the single agent got wrong (needs gold answers)
///   All    - every question
///   None   - no question; single-agent answers only
enum class ReassessMode { Oracle, All, None };

std::string_view to_string(PipelineSetting setting);
std::string_view to_string(ReassessMode mode);
std::optional<PipelineSetting> parse_setting(std::string_view text);
std::optional<ReassessMode> parse_reassess_mode(std::string_view text);

/// Row label used in report tables ("Single-Agent", ...).
std::string_view display_name(PipelineSetting setting);

}  // namespace reflectqa
