#include "reflectqa/setting.hpp"

namespace reflectqa {

std::string_view to_string(PipelineSetting setting) {
    switch (setting) {
    case PipelineSetting::Single: return "single";
    case PipelineSetting::TwoAgent: return "two";
    case PipelineSetting::ThreeAgent: return "three";
    }
    return "single";
}

std::string_view to_string(ReassessMode mode) {
    switch (mode) {
    case ReassessMode::Oracle: return "oracle";
    case ReassessMode::All: return "all";
    case ReassessMode::None: return "none";
    }
    return "oracle";
}

std::optional<PipelineSetting> parse_setting(std::string_view text) {
    for (auto s : {PipelineSetting::Single, PipelineSetting::TwoAgent, PipelineSetting::ThreeAgent}) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

std::optional<ReassessMode> parse_reassess_mode(std::string_view text) {
    for (auto m : {ReassessMode::Oracle, ReassessMode::All, ReassessMode::None}) {
        if (to_string(m) == text) return m;
    }
    return std::nullopt;
}

std::string_view display_name(PipelineSetting setting) {
    switch (setting) {
    case PipelineSetting::Single: return "Single-Agent";
    case PipelineSetting::TwoAgent: return "Two-Agent";
    case PipelineSetting::ThreeAgent: return "Three-Agent";
    }
    return "Single-Agent";
}

}  // namespace reflectqa
