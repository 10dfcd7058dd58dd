#include "reflectqa/persistence.hpp"

#include "reflectqa/hashing.hpp"

#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace reflectqa {

using nlohmann::json;

namespace {

template <typename Enum, typename Parser>
Enum parse_or_throw(const json& j, const char* key, Parser parse) {
    const auto text = j.at(key).get<std::string>();
    const auto value = parse(text);
    if (!value) {
        throw std::runtime_error(std::string("invalid ") + key + " '" + text + "'");
    }
    return *value;
}

std::string dump_line(const json& value) { return value.dump(-1, ' ', false, json::error_handler_t::replace) + "\n"; }

}  // namespace

std::string utc_now_iso8601() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::ostringstream suffix;
    suffix << ".tmp." << std::this_thread::get_id();
    const std::filesystem::path temp = path.string() + suffix.str();
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(temp, ec);
            throw std::runtime_error("cannot write " + temp.string());
        }
    }
    std::filesystem::rename(temp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

// Manifest

json to_json(const RunManifest& m) {
    json agents = json::array();
    for (const auto& a : m.agents) {
        agents.push_back({{"name", a.name},
                          {"model", a.model},
                          {"temperature", a.temperature},
                          {"max_tokens", a.max_tokens},
                          {"prompt_hash", a.prompt_hash}});
    }
    json failed = json::object();
    for (const auto& [id, error] : m.failed_ids) failed[id] = error;
    json prices = json::object();
    for (const auto& [model, price] : m.prices) {
        prices[model] = {{"prompt_per_1k", price.prompt_per_1k}, {"completion_per_1k", price.completion_per_1k}};
    }
    return json{{"run_id", m.run_id},
                {"dataset", m.dataset},
                {"dataset_path", m.dataset_path},
                {"dataset_hash", m.dataset_hash},
                {"setting", to_string(m.setting)},
                {"reassess", to_string(m.reassess)},
                {"strict_scale", m.strict_scale},
                {"prompt_hash", m.prompt_hash},
                {"agents", agents},
                {"completed_ids", m.completed_ids},
                {"failed_ids", failed},
                {"started_at", m.started_at},
                {"finished_at", m.finished_at ? json(*m.finished_at) : json()},
                {"prices", prices}};
}

RunManifest manifest_from_json(const json& j) {
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.dataset = j.at("dataset").get<std::string>();
    m.dataset_path = j.value("dataset_path", "");
    m.dataset_hash = j.value("dataset_hash", "");
    m.setting = parse_or_throw<PipelineSetting>(j, "setting", parse_setting);
    m.reassess = parse_or_throw<ReassessMode>(j, "reassess", parse_reassess_mode);
    m.strict_scale = j.value("strict_scale", false);
    m.prompt_hash = j.at("prompt_hash").get<std::string>();
    for (const auto& a : j.at("agents")) {
        m.agents.push_back({a.at("name").get<std::string>(), a.at("model").get<std::string>(),
                            a.at("temperature").get<double>(), a.at("max_tokens").get<int>(),
                            a.at("prompt_hash").get<std::string>()});
    }
    m.completed_ids = j.at("completed_ids").get<std::set<std::string>>();
    for (const auto& [id, error] : j.at("failed_ids").items()) m.failed_ids[id] = error.get<std::string>();
    m.started_at = j.value("started_at", "");
    if (j.contains("finished_at") && !j["finished_at"].is_null()) m.finished_at = j["finished_at"].get<std::string>();
    if (j.contains("prices")) {
        for (const auto& [model, price] : j["prices"].items()) {
            m.prices[model] = {price.at("prompt_per_1k").get<double>(), price.at("completion_per_1k").get<double>()};
        }
    }
    for (const auto& id : m.completed_ids) {
        if (m.failed_ids.contains(id)) {
            throw std::runtime_error("manifest lists " + id + " as both completed and failed");
        }
    }
    return m;
}

RunManifest read_manifest(const std::filesystem::path& path) {
    const json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw std::runtime_error(path.string() + " is not valid JSON");
    }
    try {
        return manifest_from_json(j);
    } catch (const json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    write_file_atomic(path, to_json(manifest).dump(2) + "\n");
}

std::string dataset_hash(std::span<const QuestionRecord> records) {
    std::string canonical;
    for (const auto& r : records) canonical += dump_line(to_json(r));
    return sha256_hex(canonical);
}

void check_resumable(const RunManifest& saved, const RunManifest& current) {
    const auto mismatch = [](const std::string& what, const std::string& was, const std::string& now) {
        throw ConfigMismatch(what + " differs from the stored run (stored '" + was + "', now '" + now + "')");
    };
    if (saved.dataset != current.dataset) mismatch("dataset", saved.dataset, current.dataset);
    if (!saved.dataset_hash.empty() && !current.dataset_hash.empty() && saved.dataset_hash != current.dataset_hash) {
        mismatch("dataset contents", saved.dataset_hash, current.dataset_hash);
    }
    if (saved.setting != current.setting) {
        mismatch("setting", std::string(to_string(saved.setting)), std::string(to_string(current.setting)));
    }
    if (saved.reassess != current.reassess) {
        mismatch("reassess mode", std::string(to_string(saved.reassess)), std::string(to_string(current.reassess)));
    }
    if (saved.strict_scale != current.strict_scale) {
        mismatch("strict-scale", saved.strict_scale ? "on" : "off", current.strict_scale ? "on" : "off");
    }
    if (saved.prompt_hash != current.prompt_hash) mismatch("prompt hash", saved.prompt_hash, current.prompt_hash);
    for (const auto& now : current.agents) {
        for (const auto& was : saved.agents) {
            if (was.name != now.name) continue;
            if (was.model != now.model) mismatch(now.name + " model", was.model, now.model);
            if (was.temperature != now.temperature) {
                mismatch(now.name + " temperature", std::to_string(was.temperature), std::to_string(now.temperature));
            }
            if (was.max_tokens != now.max_tokens) {
                mismatch(now.name + " max_tokens", std::to_string(was.max_tokens), std::to_string(now.max_tokens));
            }
        }
    }
}

std::vector<QuestionRecord> resume_run(const RunManifest& manifest, std::span<const QuestionRecord> records,
                                       bool retry_failed) {
    std::vector<QuestionRecord> remaining;
    for (const auto& r : records) {
        if (manifest.completed_ids.contains(r.id)) continue;
        if (manifest.failed_ids.contains(r.id) && !retry_failed) continue;
        remaining.push_back(r);
    }
    return remaining;
}

std::vector<QuestionRecord> resume_run(const RunManifest& manifest, const RunManifest& current,
                                       std::span<const QuestionRecord> records, bool retry_failed) {
    check_resumable(manifest, current);
    return resume_run(manifest, records, retry_failed);
}

// JSONL appends

JsonlAppender::JsonlAppender(std::filesystem::path path) : path_(std::move(path)) {
    file_ = std::fopen(path_.c_str(), "ab");
    if (file_ == nullptr) {
        throw std::runtime_error("cannot open " + path_.string() + " for appending");
    }
}

JsonlAppender::~JsonlAppender() {
    if (file_ != nullptr) std::fclose(file_);
}

void JsonlAppender::write_locked(const std::string& text) {
    std::fseek(file_, 0, SEEK_END);
    const long before = std::ftell(file_);
    const bool ok = std::fwrite(text.data(), 1, text.size(), file_) == text.size() && std::fflush(file_) == 0;
    if (!ok) {
        std::clearerr(file_);
        std::error_code ec;
        if (before >= 0) std::filesystem::resize_file(path_, static_cast<std::uintmax_t>(before), ec);
        throw std::runtime_error("write to " + path_.string() + " failed");
    }
}

void JsonlAppender::append(const json& value) {
    const std::string line = dump_line(value);
    std::lock_guard lock(mutex_);
    write_locked(line);
}

void JsonlAppender::append_all(std::span<const json> values) {
    std::string text;
    for (const auto& v : values) text += dump_line(v);
    std::lock_guard lock(mutex_);
    write_locked(text);
}

namespace {

template <typename T, typename Parse>
std::vector<T> read_jsonl(const std::filesystem::path& path, Parse parse) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": invalid JSON");
        }
        try {
            out.push_back(parse(j));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace

// Transcripts

json to_json(const TranscriptStep& step) {
    return json{{"agent", step.agent_name}, {"request", to_json(step.request)}, {"result", to_json(step.result)}};
}

TranscriptStep transcript_step_from_json(const json& j) {
    return TranscriptStep{j.at("agent").get<std::string>(), request_from_json(j.at("request")),
                          result_from_json(j.at("result"))};
}

json to_json(const PipelineResult& r) {
    json steps = json::array();
    for (const auto& s : r.transcript) steps.push_back(to_json(s));
    return json{{"question_id", r.question_id},
                {"setting", to_string(r.setting)},
                {"initial_answer", r.initial_answer},
                {"reflections", r.reflections},
                {"revised_answer", r.revised_answer ? json(*r.revised_answer) : json()},
                {"transcript", steps},
                {"total_prompt_tokens", r.total_prompt_tokens},
                {"total_completion_tokens", r.total_completion_tokens},
                {"tokens_estimated", r.tokens_estimated},
                {"error", r.error ? json(*r.error) : json()}};
}

PipelineResult pipeline_result_from_json(const json& j) {
    PipelineResult r;
    r.question_id = j.at("question_id").get<std::string>();
    r.setting = parse_or_throw<PipelineSetting>(j, "setting", parse_setting);
    r.initial_answer = j.at("initial_answer").get<std::string>();
    r.reflections = j.at("reflections").get<std::vector<std::string>>();
    if (!j.at("revised_answer").is_null()) r.revised_answer = j["revised_answer"].get<std::string>();
    for (const auto& s : j.at("transcript")) r.transcript.push_back(transcript_step_from_json(s));
    r.total_prompt_tokens = j.at("total_prompt_tokens").get<std::uint64_t>();
    r.total_completion_tokens = j.at("total_completion_tokens").get<std::uint64_t>();
    r.tokens_estimated = j.value("tokens_estimated", false);
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
    return r;
}

std::size_t write_transcripts(std::span<const PipelineResult> results, const std::filesystem::path& path) {
    std::vector<json> lines;
    lines.reserve(results.size());
    for (const auto& r : results) lines.push_back(to_json(r));
    JsonlAppender appender(path);
    appender.append_all(lines);
    return lines.size();
}

std::vector<PipelineResult> read_transcripts(const std::filesystem::path& path) {
    return read_jsonl<PipelineResult>(path, pipeline_result_from_json);
}

// Evals

json to_json(const ExtractedAnswer& a) {
    json out{{"kind", to_string(a.kind)}, {"raw", a.raw_span}};
    if (a.kind == AnswerKind::Numeric) {
        out["value"] = a.value.to_string();
        out["scale"] = to_string(a.scale);
    }
    return out;
}

ExtractedAnswer extracted_answer_from_json(const json& j) {
    ExtractedAnswer a;
    a.kind = parse_or_throw<AnswerKind>(j, "kind", parse_answer_kind);
    a.raw_span = j.at("raw").get<std::string>();
    if (a.kind == AnswerKind::Numeric) {
        const auto value = Decimal::parse(j.at("value").get<std::string>());
        if (!value) throw std::runtime_error("invalid numeric value " + j["value"].dump());
        a.value = *value;
        a.scale = parse_or_throw<Scale>(j, "scale", parse_scale);
    }
    return a;
}

json to_json(const EvalRecord& r) {
    json out{{"question_id", r.question_id},
             {"stage", to_string(r.stage)},
             {"predicted", to_json(r.predicted)},
             {"gold", r.gold},
             {"correct", r.correct},
             {"prompt_tokens", r.prompt_tokens},
             {"completion_tokens", r.completion_tokens},
             {"tokens_estimated", r.tokens_estimated}};
    if (r.error) out["error"] = *r.error;
    return out;
}

EvalRecord eval_record_from_json(const json& j) {
    EvalRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.stage = parse_or_throw<EvalStage>(j, "stage", parse_eval_stage);
    r.predicted = extracted_answer_from_json(j.at("predicted"));
    r.gold = j.at("gold").get<std::string>();
    r.correct = j.at("correct").get<bool>();
    r.prompt_tokens = j.value("prompt_tokens", std::uint64_t{0});
    r.completion_tokens = j.value("completion_tokens", std::uint64_t{0});
    r.tokens_estimated = j.value("tokens_estimated", false);
    if (j.contains("error") && !j["error"].is_null()) r.error = j["error"].get<std::string>();
    return r;
}

std::vector<EvalRecord> read_evals(const std::filesystem::path& path) {
    return read_jsonl<EvalRecord>(path, eval_record_from_json);
}

void write_evals(std::span<const EvalRecord> records, const std::filesystem::path& path) {
    std::string text;
    for (const auto& r : records) text += dump_line(to_json(r));
    write_file_atomic(path, text);
}

std::vector<EvalRecord> canonicalize_evals(std::span<const EvalRecord> records, std::span<const std::string> order) {
    std::unordered_map<std::string, std::vector<EvalRecord>> latest;
    std::vector<std::string> seen;
    for (const auto& r : records) {
        auto [it, inserted] = latest.try_emplace(r.question_id);
        if (inserted) seen.push_back(r.question_id);
        if (r.stage == EvalStage::Single) it->second.clear();
        it->second.push_back(r);
    }
    std::vector<EvalRecord> out;
    out.reserve(records.size());
    const auto emit = [&](const std::string& id) {
        const auto it = latest.find(id);
        if (it == latest.end()) return;
        for (auto& r : it->second) out.push_back(std::move(r));
        latest.erase(it);
    };
    for (const auto& id : order) emit(id);
    for (const auto& id : seen) emit(id);
    return out;
}

// Reports

json to_json(const ScoreReport& r) {
    json cost{{"prompt_tokens", r.cost.prompt_tokens},
              {"completion_tokens", r.cost.completion_tokens},
              {"estimated", r.cost.estimated},
              {"spend_usd", r.cost.spend_usd ? json(*r.cost.spend_usd) : json()}};
    return json{{"dataset", r.dataset},
                {"model", r.model},
                {"setting", to_string(r.setting)},
                {"reassess", to_string(r.reassess)},
                {"total", r.total},
                {"failed", r.failed},
                {"single_correct", r.single_correct},
                {"setting_correct", r.setting_correct},
                {"single_em", r.single_em},
                {"setting_em", r.setting_em},
                {"gain", r.gain},
                {"cost", cost}};
}

ScoreReport score_report_from_json(const json& j) {
    ScoreReport r;
    r.dataset = j.at("dataset").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.setting = parse_or_throw<PipelineSetting>(j, "setting", parse_setting);
    r.reassess = parse_or_throw<ReassessMode>(j, "reassess", parse_reassess_mode);
    r.total = j.at("total").get<std::size_t>();
    r.failed = j.at("failed").get<std::size_t>();
    r.single_correct = j.at("single_correct").get<std::size_t>();
    r.setting_correct = j.at("setting_correct").get<std::size_t>();
    r.single_em = j.at("single_em").get<double>();
    r.setting_em = j.at("setting_em").get<double>();
    r.gain = j.at("gain").get<double>();
    const json& cost = j.at("cost");
    r.cost.prompt_tokens = cost.at("prompt_tokens").get<std::uint64_t>();
    r.cost.completion_tokens = cost.at("completion_tokens").get<std::uint64_t>();
    r.cost.estimated = cost.value("estimated", false);
    if (cost.contains("spend_usd") && !cost["spend_usd"].is_null()) r.cost.spend_usd = cost["spend_usd"].get<double>();
    return r;
}

std::string serialize_report(const ScoreReport& report) { return to_json(report).dump(2) + "\n"; }

}  // namespace reflectqa
