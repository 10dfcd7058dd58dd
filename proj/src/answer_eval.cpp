#include "reflectqa/answer_eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <stdexcept>

namespace reflectqa {

namespace {

constexpr std::string_view kUnicodeMinus = "\xE2\x88\x92";

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool is_blank(char c) { return c == ' ' || c == '\t'; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view word) {
    if (pos + word.size() > text.size()) {
        return false;
    }
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (lower(text[pos + i]) != word[i]) {
            return false;
        }
    }
    return true;
}

bool ends_with_at(std::string_view text, std::size_t end, std::string_view suffix) {
    return end >= suffix.size() && text.substr(end - suffix.size(), suffix.size()) == suffix;
}

struct NumberToken {
    std::size_t begin = 0;
    std::size_t end = 0;
    Decimal value;
    Scale scale = Scale::Unit;
};

struct ScaleWord {
    std::string_view word;
    Scale scale;
};

// Longest spellings first so "millions" wins over "million".
constexpr std::array kScaleWords{
    ScaleWord{"percentage", Scale::Percent}, ScaleWord{"per cent", Scale::Percent},
    ScaleWord{"percent", Scale::Percent},    ScaleWord{"thousands", Scale::Thousand},
    ScaleWord{"thousand", Scale::Thousand},  ScaleWord{"millions", Scale::Million},
    ScaleWord{"million", Scale::Million},    ScaleWord{"mn", Scale::Million},
    ScaleWord{"billions", Scale::Billion},   ScaleWord{"billion", Scale::Billion},
    ScaleWord{"bn", Scale::Billion},
};

struct ScaleMatch {
    Scale scale;
    std::size_t end;
};

std::optional<ScaleMatch> match_scale(std::string_view text, std::size_t pos) {
    while (pos < text.size() && is_blank(text[pos])) {
        ++pos;
    }
    if (pos < text.size() && text[pos] == '%') {
        return ScaleMatch{Scale::Percent, pos + 1};
    }
    for (const auto& [word, scale] : kScaleWords) {
        if (iequals_at(text, pos, word)) {
            const std::size_t end = pos + word.size();
            if (end == text.size() || !is_alpha(text[end])) {
                return ScaleMatch{scale, end};
            }
        }
    }
    return std::nullopt;
}

// Length of a currency marker ending at `end`, or 0.
std::size_t currency_before(std::string_view text, std::size_t end) {
    for (std::string_view marker : {std::string_view{"US$"}, std::string_view{"$"}, std::string_view{"\xE2\x82\xAC"},
                                    std::string_view{"\xC2\xA3"}}) {
        if (ends_with_at(text, end, marker)) {
            return marker.size();
        }
    }
    if (end >= 3 && iequals_at(text, end - 3, "usd") && (end == 3 || !is_alpha(text[end - 4]))) {
        return 3;
    }
    return 0;
}

// Parses the digits of a number starting at `pos`; returns the end offset
// and the separator-free digit string.
std::optional<std::pair<std::size_t, std::string>> scan_core(std::string_view text, std::size_t pos) {
    std::string digits;
    std::size_t i = pos;
    while (i < text.size() && is_digit(text[i])) {
        digits.push_back(text[i++]);
    }
    // Thousands separators: a comma followed by exactly three digits.
    while (!digits.empty() && i + 3 < text.size() && text[i] == ',' && is_digit(text[i + 1]) &&
           is_digit(text[i + 2]) && is_digit(text[i + 3]) && (i + 4 >= text.size() || !is_digit(text[i + 4]))) {
        digits.append(text.substr(i + 1, 3));
        i += 4;
    }
    if (i + 1 < text.size() && text[i] == '.' && is_digit(text[i + 1])) {
        digits.push_back('.');
        ++i;
        while (i < text.size() && is_digit(text[i])) {
            digits.push_back(text[i++]);
        }
    }
    if (digits.empty()) {
        return std::nullopt;
    }
    return std::make_pair(i, std::move(digits));
}

std::vector<NumberToken> scan_numbers(std::string_view text) {
    std::vector<NumberToken> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        const bool starts_number =
            is_digit(text[i]) || (text[i] == '.' && i + 1 < text.size() && is_digit(text[i + 1]));
        if (!starts_number) {
            ++i;
            continue;
        }
        if (i > 0 && (is_alpha(text[i - 1]) || is_digit(text[i - 1]))) {
            // Part of an identifier such as "Q4" or "FY2019".
            while (i < text.size() && is_alnum(text[i])) {
                ++i;
            }
            continue;
        }
        auto core = scan_core(text, i);
        if (!core) {
            ++i;
            continue;
        }
        const auto [core_end, digits] = *core;
        auto value = Decimal::parse(digits);
        if (!value) {
            i = core_end;
            continue;
        }

        // Leftwards: currency markers, an opening parenthesis, a sign.
        std::size_t start = i;
        std::optional<std::size_t> paren_pos;
        std::size_t start_inside_paren = i;
        bool signed_negative = false;
        bool sign_seen = false;
        for (;;) {
            std::size_t k = start;
            while (k > 0 && is_blank(text[k - 1])) {
                --k;
            }
            if (k == 0) {
                break;
            }
            if (text[k - 1] == '(' && !paren_pos && !sign_seen) {
                paren_pos = k - 1;
                start_inside_paren = start;
                start = k - 1;
                continue;
            }
            if (const std::size_t len = currency_before(text, k); len > 0 && !sign_seen) {
                start = k - len;
                continue;
            }
            if (k == start && !sign_seen) {
                std::size_t sign_len = 0;
                if (text[k - 1] == '-' || text[k - 1] == '+') {
                    sign_len = 1;
                } else if (ends_with_at(text, k, kUnicodeMinus)) {
                    sign_len = kUnicodeMinus.size();
                }
                if (sign_len > 0) {
                    const std::size_t sign_pos = k - sign_len;
                    if (sign_pos == 0 || !is_alnum(text[sign_pos - 1])) {
                        sign_seen = true;
                        signed_negative = text[sign_pos] != '+';
                        start = sign_pos;
                        continue;
                    }
                }
            }
            break;
        }

        // Rightwards: scale word, closing parenthesis, scale word.
        std::size_t end = core_end;
        std::optional<Scale> scale;
        if (auto m = match_scale(text, end)) {
            scale = m->scale;
            end = m->end;
        }
        bool paren_closed = false;
        if (paren_pos) {
            std::size_t k = end;
            while (k < text.size() && is_blank(text[k])) {
                ++k;
            }
            if (k < text.size() && text[k] == ')') {
                paren_closed = true;
                end = k + 1;
            } else {
                start = start_inside_paren;
                signed_negative = false;
                // Anything left of an unmatched "(" is not part of this number.
                while (start < i && is_blank(text[start])) {
                    ++start;
                }
            }
        }
        if (!scale && paren_closed) {
            if (auto m = match_scale(text, end)) {
                scale = m->scale;
                end = m->end;
            }
        }

        Decimal number = *value;
        if (signed_negative || paren_closed) {
            number = number.abs().negated();
        }
        tokens.push_back(NumberToken{start, end, number, scale.value_or(Scale::Unit)});
        i = std::max(end, core_end);
    }
    return tokens;
}

ExtractedAnswer to_answer(std::string_view text, const NumberToken& token, std::size_t offset = 0) {
    ExtractedAnswer answer;
    answer.kind = AnswerKind::Numeric;
    answer.value = token.value;
    answer.scale = token.scale;
    answer.raw_span = std::string(text.substr(offset + token.begin, token.end - token.begin));
    return answer;
}

std::pair<std::size_t, std::size_t> trim_range(std::string_view text, std::size_t begin, std::size_t end,
                                               std::string_view strip = " \t\r*_") {
    while (begin < end && strip.find(text[begin]) != std::string_view::npos) {
        ++begin;
    }
    while (end > begin && strip.find(text[end - 1]) != std::string_view::npos) {
        --end;
    }
    return {begin, end};
}

struct Line {
    std::size_t begin;
    std::size_t end;
};

std::vector<Line> split_lines(std::string_view text) {
    std::vector<Line> lines;
    std::size_t begin = 0;
    while (begin <= text.size()) {
        std::size_t end = text.find('\n', begin);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        lines.push_back({begin, end});
        begin = end + 1;
    }
    return lines;
}

// Offset just past "final answer:" (emphasis tolerated) within the line.
std::optional<std::size_t> find_marker(std::string_view text, const Line& line) {
    constexpr std::string_view kMarker = "final answer";
    std::optional<std::size_t> found;
    for (std::size_t p = line.begin; p + kMarker.size() <= line.end; ++p) {
        if (!iequals_at(text, p, kMarker)) {
            continue;
        }
        std::size_t q = p + kMarker.size();
        while (q < line.end && (text[q] == '*' || text[q] == '_' || is_blank(text[q]))) {
            ++q;
        }
        if (q < line.end && text[q] == ':') {
            found = q + 1;
        }
    }
    return found;
}

std::optional<ExtractedAnswer> answer_from_range(std::string_view text, std::size_t begin, std::size_t end) {
    const auto [b, e] = trim_range(text, begin, end);
    if (b >= e) {
        return std::nullopt;
    }
    const std::string_view remainder = text.substr(b, e - b);
    const auto tokens = scan_numbers(remainder);
    if (!tokens.empty()) {
        return to_answer(text, tokens.front(), b);
    }
    ExtractedAnswer answer;
    answer.kind = AnswerKind::Text;
    answer.raw_span = std::string(remainder);
    return answer;
}

bool within_tolerance(const Decimal& predicted, const Decimal& gold, int gold_places) {
    const Decimal absolute_tol(5, -(gold_places + 1));
    const Decimal relative_tol = gold.abs().shifted(-6);
    const Decimal& tolerance = absolute_tol < relative_tol ? relative_tol : absolute_tol;
    try {
        return (predicted - gold).abs() <= tolerance;
    } catch (const std::overflow_error&) {
        return false;
    }
}

std::string format_fixed2(double value, bool with_sign = false) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, with_sign ? "%+.2f" : "%.2f", value);
    return buffer;
}

}  // namespace

std::string_view to_string(AnswerKind kind) { return kind == AnswerKind::Numeric ? "numeric" : "text"; }

std::string_view to_string(Scale scale) {
    switch (scale) {
    case Scale::Unit: return "unit";
    case Scale::Percent: return "percent";
    case Scale::Thousand: return "thousand";
    case Scale::Million: return "million";
    case Scale::Billion: return "billion";
    }
    return "unit";
}

std::optional<AnswerKind> parse_answer_kind(std::string_view text) {
    if (text == "numeric") return AnswerKind::Numeric;
    if (text == "text") return AnswerKind::Text;
    return std::nullopt;
}

std::optional<Scale> parse_scale(std::string_view text) {
    for (Scale s : {Scale::Unit, Scale::Percent, Scale::Thousand, Scale::Million, Scale::Billion}) {
        if (to_string(s) == text) {
            return s;
        }
    }
    return std::nullopt;
}

int scale_exponent(Scale scale) {
    switch (scale) {
    case Scale::Unit: return 0;
    case Scale::Percent: return -2;
    case Scale::Thousand: return 3;
    case Scale::Million: return 6;
    case Scale::Billion: return 9;
    }
    return 0;
}

std::optional<ExtractedAnswer> find_first_number(std::string_view text) {
    const auto tokens = scan_numbers(text);
    if (tokens.empty()) {
        return std::nullopt;
    }
    return to_answer(text, tokens.front());
}

std::optional<ExtractedAnswer> find_last_number(std::string_view text) {
    const auto tokens = scan_numbers(text);
    if (tokens.empty()) {
        return std::nullopt;
    }
    return to_answer(text, tokens.back());
}

ExtractedAnswer extract_answer(std::string_view text) {
    const auto lines = split_lines(text);

    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const auto marker_end = find_marker(text, *it);
        if (!marker_end) {
            continue;
        }
        if (auto answer = answer_from_range(text, *marker_end, it->end)) {
            return *answer;
        }
        // "Final Answer:" alone on its line; the value follows.
        for (auto next = it.base(); next != lines.end(); ++next) {
            if (auto answer = answer_from_range(text, next->begin, next->end)) {
                return *answer;
            }
        }
        break;
    }

    if (auto last = find_last_number(text)) {
        return *last;
    }

    ExtractedAnswer answer;
    answer.kind = AnswerKind::Text;
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        const auto [b, e] = trim_range(text, it->begin, it->end, " \t\r");
        if (b < e) {
            answer.raw_span = std::string(text.substr(b, e - b));
            break;
        }
    }
    return answer;
}

ExtractedAnswer parse_gold(std::string_view gold) {
    const auto [b, e] = trim_range(gold, 0, gold.size(), " \t\r\n");
    const std::string_view trimmed = gold.substr(b, e - b);
    const auto tokens = scan_numbers(trimmed);
    if (tokens.size() == 1) {
        const auto& token = tokens.front();
        std::string rest(trimmed.substr(0, token.begin));
        rest += " ";
        rest += trimmed.substr(token.end);
        const std::string residue = normalize_text(rest);
        if (residue.empty() || residue == "dollars" || residue == "dollar" || residue == "usd") {
            return to_answer(trimmed, token);
        }
    }
    ExtractedAnswer answer;
    answer.kind = AnswerKind::Text;
    answer.raw_span = std::string(trimmed);
    return answer;
}

std::string render(const ExtractedAnswer& answer) {
    if (answer.kind == AnswerKind::Text) {
        return answer.raw_span;
    }
    std::string out = answer.value.to_string();
    switch (answer.scale) {
    case Scale::Unit: break;
    case Scale::Percent: out += "%"; break;
    default:
        out += " ";
        out += to_string(answer.scale);
        break;
    }
    return out;
}

std::string normalize_text(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isspace(u) != 0) {
            pending_space = !out.empty();
            continue;
        }
        if (u < 0x80 && std::ispunct(u) != 0) {
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(lower(c));
    }
    return out;
}

bool exact_match(const ExtractedAnswer& predicted, std::string_view gold, const MatchOptions& options) {
    if (normalize_text(gold).empty() && gold.find_first_of("0123456789") == std::string_view::npos) {
        return false;
    }
    const ExtractedAnswer parsed = parse_gold(gold);
    if (predicted.kind == AnswerKind::Numeric && parsed.kind == AnswerKind::Numeric) {
        const bool same_frame = predicted.scale == parsed.scale || predicted.scale == Scale::Unit ||
                                parsed.scale == Scale::Unit;
        if (same_frame && within_tolerance(predicted.value, parsed.value, parsed.value.decimal_places())) {
            return true;
        }
        if (!options.strict_scale) {
            const int gold_shift = scale_exponent(parsed.scale);
            const Decimal p = predicted.value.shifted(scale_exponent(predicted.scale));
            const Decimal g = parsed.value.shifted(gold_shift);
            if (within_tolerance(p, g, parsed.value.decimal_places() - gold_shift)) {
                return true;
            }
        }
        return false;
    }
    const std::string expected = normalize_text(parsed.raw_span);
    return !expected.empty() && normalize_text(predicted.raw_span) == expected;
}

std::string_view to_string(EvalStage stage) { return stage == EvalStage::Single ? "single" : "revised"; }

std::optional<EvalStage> parse_eval_stage(std::string_view text) {
    if (text == "single") return EvalStage::Single;
    if (text == "revised") return EvalStage::Revised;
    return std::nullopt;
}

EvalRecord evaluate(std::string question_id, EvalStage stage, std::string_view answer_text, std::string gold,
                    const MatchOptions& options) {
    EvalRecord record;
    record.question_id = std::move(question_id);
    record.stage = stage;
    record.predicted = extract_answer(answer_text);
    record.correct = exact_match(record.predicted, gold, options);
    record.gold = std::move(gold);
    return record;
}

double em_percentage(std::size_t correct, std::size_t total) {
    if (total == 0) {
        return 0.0;
    }
    // Hundredths of a percent, rounded half up in integer arithmetic.
    const std::uint64_t hundredths = (20000ULL * correct + total) / (2ULL * total);
    return static_cast<double>(hundredths) / 100.0;
}

double compute_gain(double multi_em, double single_em) {
    return static_cast<double>(std::llround(multi_em * 100.0) - std::llround(single_em * 100.0)) / 100.0;
}

CombinedScore score_combined(std::span<const EvalRecord> single, std::span<const EvalRecord> revised,
                             bool oracle_gated) {
    std::map<std::string, bool> single_correct;
    for (const auto& record : single) {
        if (!single_correct.emplace(record.question_id, record.correct).second) {
            throw std::invalid_argument("duplicate single-stage record for " + record.question_id);
        }
    }
    std::set<std::string> recovered;
    for (const auto& record : revised) {
        const auto it = single_correct.find(record.question_id);
        if (it == single_correct.end()) {
            throw std::invalid_argument("revised record without single-stage record: " + record.question_id);
        }
        if (it->second) {
            if (oracle_gated) {
                throw OverlapViolation(record.question_id);
            }
            continue;
        }
        if (record.correct) {
            recovered.insert(record.question_id);
        }
    }
    CombinedScore score;
    score.total = single.size();
    score.single_correct = static_cast<std::size_t>(
        std::count_if(single_correct.begin(), single_correct.end(), [](const auto& kv) { return kv.second; }));
    score.recovered = recovered.size();
    score.combined_correct = score.single_correct + score.recovered;
    score.single_em = em_percentage(score.single_correct, score.total);
    score.combined_em = em_percentage(score.combined_correct, score.total);
    return score;
}

ScoreReport build_score_report(std::string dataset, std::string model, PipelineSetting setting,
                               ReassessMode reassess, std::span<const EvalRecord> evals,
                               std::optional<ModelPrice> price) {
    std::vector<EvalRecord> single;
    std::vector<EvalRecord> revised;
    std::set<std::string> failed;
    ScoreReport report;
    for (const auto& record : evals) {
        (record.stage == EvalStage::Single ? single : revised).push_back(record);
        if (record.error) {
            failed.insert(record.question_id);
        }
        report.cost.prompt_tokens += record.prompt_tokens;
        report.cost.completion_tokens += record.completion_tokens;
        report.cost.estimated = report.cost.estimated || record.tokens_estimated;
    }

    const auto combined = score_combined(single, revised, reassess == ReassessMode::Oracle);
    report.dataset = std::move(dataset);
    report.model = std::move(model);
    report.setting = setting;
    report.reassess = reassess;
    report.total = combined.total;
    report.failed = failed.size();
    report.single_correct = combined.single_correct;

    switch (reassess) {
    case ReassessMode::Oracle:
        report.setting_correct = combined.combined_correct;
        break;
    case ReassessMode::None:
        report.setting_correct = combined.single_correct;
        break;
    case ReassessMode::All: {
        std::map<std::string, bool> final_correct;
        for (const auto& record : single) final_correct[record.question_id] = record.correct;
        for (const auto& record : revised) final_correct[record.question_id] = record.correct;
        report.setting_correct = static_cast<std::size_t>(
            std::count_if(final_correct.begin(), final_correct.end(), [](const auto& kv) { return kv.second; }));
        break;
    }
    }
    report.single_em = em_percentage(report.single_correct, report.total);
    report.setting_em = em_percentage(report.setting_correct, report.total);
    report.gain = compute_gain(report.setting_em, report.single_em);

    if (price) {
        const double spend = static_cast<double>(report.cost.prompt_tokens) / 1000.0 * price->prompt_per_1k +
                             static_cast<double>(report.cost.completion_tokens) / 1000.0 * price->completion_per_1k;
        report.cost.spend_usd = std::round(spend * 1e6) / 1e6;
    }
    return report;
}

std::string render_score_table(std::span<const ScoreReport> reports) {
    auto dataset_rank = [](const std::string& name) {
        if (name == "FinQA") return 0;
        if (name == "ConvFinQA") return 1;
        if (name == "TAT-QA") return 2;
        return 3;
    };

    std::vector<std::string> models;
    std::vector<std::string> datasets;
    for (const auto& r : reports) {
        if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    }
    std::stable_sort(datasets.begin(), datasets.end(), [&](const std::string& a, const std::string& b) {
        const int ra = dataset_rank(a);
        const int rb = dataset_rank(b);
        return ra != rb ? ra < rb : (ra == 3 && a < b);
    });
    const bool model_column = models.size() > 1;

    // (model, dataset, setting) → report; later reports win.
    std::map<std::tuple<std::string, std::string, PipelineSetting>, const ScoreReport*> cells;
    for (const auto& r : reports) {
        cells[{r.model, r.dataset, r.setting}] = &r;
    }

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header;
    if (model_column) header.push_back("Model");
    header.push_back("Setting");
    for (const auto& d : datasets) header.push_back(d);
    rows.push_back(header);

    for (const auto& model : models) {
        auto find = [&](const std::string& dataset, PipelineSetting s) -> const ScoreReport* {
            const auto it = cells.find({model, dataset, s});
            return it == cells.end() ? nullptr : it->second;
        };
        auto single_em = [&](const std::string& dataset) -> std::optional<double> {
            for (auto s : {PipelineSetting::Single, PipelineSetting::TwoAgent, PipelineSetting::ThreeAgent}) {
                if (const auto* r = find(dataset, s)) return r->single_em;
            }
            return std::nullopt;
        };
        bool has_two = false;
        bool has_three = false;
        for (const auto& d : datasets) {
            has_two = has_two || find(d, PipelineSetting::TwoAgent) != nullptr;
            has_three = has_three || find(d, PipelineSetting::ThreeAgent) != nullptr;
        }

        auto add_row = [&](std::string label, auto&& cell) {
            std::vector<std::string> row;
            if (model_column) row.push_back(model);
            row.push_back(std::move(label));
            for (const auto& d : datasets) row.push_back(cell(d));
            rows.push_back(std::move(row));
        };
        add_row(std::string(display_name(PipelineSetting::Single)), [&](const std::string& d) {
            const auto em = single_em(d);
            return em ? format_fixed2(*em) : std::string("-");
        });
        for (auto s : {PipelineSetting::TwoAgent, PipelineSetting::ThreeAgent}) {
            if ((s == PipelineSetting::TwoAgent && !has_two) || (s == PipelineSetting::ThreeAgent && !has_three)) {
                continue;
            }
            add_row(std::string(display_name(s)), [&](const std::string& d) {
                const auto* r = find(d, s);
                return r ? format_fixed2(r->setting_em) : std::string("-");
            });
        }
        if (has_two || has_three) {
            add_row("gain", [&](const std::string& d) {
                const auto* r = find(d, PipelineSetting::ThreeAgent);
                if (r == nullptr) r = find(d, PipelineSetting::TwoAgent);
                const auto base = single_em(d);
                if (r == nullptr || !base) return std::string("-");
                return format_fixed2(compute_gain(r->setting_em, *base), true);
            });
        }
    }

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
    }
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::string cell = row[i];
            cell.resize(widths[i], ' ');
            line += cell;
            if (i + 1 < row.size()) line += "  ";
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace reflectqa
