#include "support/fixtures.hpp"

#include <atomic>
#include <map>
#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace reflectqa::testing {

using nlohmann::json;

TempDir::TempDir(const std::string& prefix) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (prefix + "-" + std::to_string(::getpid()) + "-" + std::to_string(stamp) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

json finqa_documents(std::size_t count) {
    json docs = json::array();
    for (std::size_t i = 0; i < count; ++i) {
        const auto a = 100 + i;
        const auto b = 120 + 2 * i;
        docs.push_back({
            {"id", "FIN/" + std::to_string(2000 + i % 20) + "/page_" + std::to_string(i) + ".pdf-1"},
            {"filename", "FIN/page_" + std::to_string(i) + ".pdf"},
            {"pre_text", {"the company reports the following figures .", "amounts in millions ."}},
            {"post_text", {"see note " + std::to_string(i % 9 + 1) + " ."}},
            {"table_ori", {{"", "2008", "2009"}, {"revenue", std::to_string(a), std::to_string(b)}}},
            {"table", {{"", "2008", "2009"}, {"revenue", "$ " + std::to_string(a), "$ " + std::to_string(b)}}},
            {"qa",
             {{"question", "what was the change in revenue from 2008 to 2009 for filing " + std::to_string(i) + "?"},
              {"program", "subtract(" + std::to_string(b) + ", " + std::to_string(a) + ")"},
              {"exe_ans", static_cast<double>(b - a)},
              {"answer", std::to_string(b - a)}}},
        });
    }
    return docs;
}

json convfinqa_documents(std::size_t count) {
    json docs = json::array();
    for (std::size_t i = 0; i < count; ++i) {
        const auto a = 50 + i;
        const auto b = 75 + i;
        docs.push_back({
            {"id", "Single_CONV/" + std::to_string(i) + ".pdf-" + std::to_string(i % 4)},
            {"pre_text", {"net sales were as follows ."}},
            {"post_text", {}},
            {"table", {{"", "2017", "2018"}, {"net sales", std::to_string(a), std::to_string(b)}}},
            {"annotation",
             {{"dialogue_break",
               {"what were net sales in 2018?", "and in 2017?", "what was the difference in conversation " +
                                                                   std::to_string(i) + "?"}},
              {"turn_program", {std::to_string(b), std::to_string(a), "subtract(" + std::to_string(b) + ", #1)"}},
              {"exe_ans_list", {static_cast<double>(b), static_cast<double>(a), static_cast<double>(b - a)}}}},
        });
    }
    return docs;
}

json tatqa_documents(std::size_t count) {
    json docs = json::array();
    std::size_t made = 0;
    std::size_t doc_index = 0;
    while (made < count) {
        json questions = json::array();
        for (int q = 0; q < 3 && made < count; ++q, ++made) {
            const bool percent = made % 2 == 0;
            questions.push_back({
                {"uid", "tat-" + std::to_string(made)},
                {"order", q + 1},
                {"question", "What is the change in item " + std::to_string(made) + "?"},
                {"answer", percent ? json(12.5 + static_cast<double>(made)) : json(std::to_string(made) + ".0")},
                {"derivation", "x - y"},
                {"answer_type", "arithmetic"},
                {"answer_from", "table-text"},
                {"scale", percent ? "percent" : "thousand"},
            });
        }
        docs.push_back({
            {"table", {{"uid", "t-" + std::to_string(doc_index)},
                       {"table", {{"", "2019", "2018"}, {"Revenue", "1,200", "1,100"}, {"Cost", "800"}}}}},
            {"paragraphs",
             {{{"uid", "p2"}, {"order", 2}, {"text", "Second paragraph."}},
              {{"uid", "p1"}, {"order", 1}, {"text", "First paragraph."}}}},
            {"questions", questions},
        });
        ++doc_index;
    }
    return docs;
}

std::vector<QuestionRecord> synthetic_records(std::size_t count, DatasetKind kind) {
    std::vector<QuestionRecord> records;
    for (std::size_t i = 0; i < count; ++i) {
        QuestionRecord r;
        r.id = "q" + std::to_string(i);
        r.dataset = kind;
        r.pre_text = {"Paragraph about filing " + std::to_string(i) + "."};
        r.post_text = {"Closing note " + std::to_string(i) + "."};
        r.table.rows = {{"item", "value"}, {"metric-" + std::to_string(i), std::to_string(i + 1)}};
        r.question = "What is the value of metric-" + std::to_string(i) + "?";
        if (kind == DatasetKind::ConvFinQA) {
            r.turn_history = {{"what is the first item?", "1"}, {"and the second?", "2"}};
        }
        r.gold_answer = std::to_string(i + 1);
        records.push_back(std::move(r));
    }
    return records;
}

std::string agent_of(const CompletionRequest& request) {
    const std::string& system = request.messages.front().content;
    if (system.find("financial analysis agent") != std::string::npos) {
        return request.messages.size() > 2 ? "revision" : "expert";
    }
    if (system.find("reflective AI agent") != std::string::npos) return "critic";
    if (system.find("Data Extraction") != std::string::npos) return "critic_extraction";
    if (system.find("Calculation Steps") != std::string::npos) return "critic_calculation";
    return "unknown";
}

ScriptedBackend::Responder simulated_agents(const std::vector<QuestionRecord>& records,
                                            std::set<std::string> expert_correct,
                                            std::set<std::string> revision_correct) {
    std::map<std::string, std::pair<std::string, std::string>> by_question;  // question -> (id, gold)
    for (const auto& r : records) by_question[r.question] = {r.id, r.gold_answer};
    return [by_question = std::move(by_question), expert_correct = std::move(expert_correct),
            revision_correct = std::move(revision_correct)](const CompletionRequest& request) -> std::string {
        const std::string& query = request.messages.at(1).content;
        const auto marker = query.find("QUESTION:\n");
        const auto end = query.find("\n\n", marker);
        const std::string question =
            query.substr(marker + 10, end == std::string::npos ? std::string::npos : end - marker - 10);
        const auto& [id, gold] = by_question.at(question);
        const std::string wrong = gold + "999";
        const std::string agent = agent_of(request);
        if (agent == "expert") {
            return "Reading the table for " + id + ".\nFinal Answer: " +
                   (expert_correct.contains(id) ? gold : wrong);
        }
        if (agent == "revision") {
            return "Revised after feedback.\nFinal Answer: " + (revision_correct.contains(id) ? gold : wrong);
        }
        return agent + " feedback for " + id;
    };
}

}  // namespace reflectqa::testing
