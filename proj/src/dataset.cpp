#include "reflectqa/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace reflectqa {

using nlohmann::json;

namespace {

std::string trim(std::string_view text) {
    const auto begin = text.find_first_not_of(" \t\r\n");
    if (begin == std::string_view::npos) {
        return {};
    }
    const auto end = text.find_last_not_of(" \t\r\n");
    return std::string(text.substr(begin, end - begin + 1));
}

// Strings pass through; numbers keep their JSON spelling.
std::string scalar_text(const json& value, std::size_t index, std::string_view field) {
    if (value.is_string()) {
        return value.get<std::string>();
    }
    if (value.is_number()) {
        return value.dump();
    }
    if (value.is_null()) {
        return {};
    }
    throw MalformedRecord(index, std::string(field) + " is not a string or number");
}

const json& require(const json& object, std::string_view key, std::size_t index) {
    if (!object.is_object()) {
        throw MalformedRecord(index, "expected an object containing '" + std::string(key) + "'");
    }
    const auto it = object.find(key);
    if (it == object.end()) {
        throw MalformedRecord(index, "missing field '" + std::string(key) + "'");
    }
    return *it;
}

std::vector<std::string> string_list(const json& object, std::string_view key, std::size_t index) {
    std::vector<std::string> out;
    const auto it = object.find(key);
    if (it == object.end() || it->is_null()) {
        return out;
    }
    if (!it->is_array()) {
        throw MalformedRecord(index, "'" + std::string(key) + "' is not a list");
    }
    for (const auto& item : *it) {
        out.push_back(scalar_text(item, index, key));
    }
    return out;
}

Table table_from(const json& rows, std::size_t index) {
    Table table;
    if (rows.is_null()) {
        return table;
    }
    if (!rows.is_array()) {
        throw MalformedRecord(index, "table is not a list of rows");
    }
    for (const auto& row : rows) {
        if (!row.is_array()) {
            throw MalformedRecord(index, "table row is not a list");
        }
        std::vector<std::string> cells;
        for (const auto& cell : row) {
            cells.push_back(scalar_text(cell, index, "table cell"));
        }
        table.rows.push_back(std::move(cells));
    }
    if (table.column_count() == 0) {
        table.rows.clear();
    }
    table.pad();
    return table;
}

std::string require_id(const json& object, std::size_t index) {
    std::string id = trim(scalar_text(require(object, "id", index), index, "id"));
    if (id.empty()) {
        throw MalformedRecord(index, "empty id");
    }
    return id;
}

QuestionRecord finqa_record(const json& doc, std::size_t index) {
    QuestionRecord r;
    r.dataset = DatasetKind::FinQA;
    r.id = require_id(doc, index);
    r.pre_text = string_list(doc, "pre_text", index);
    r.post_text = string_list(doc, "post_text", index);
    r.table = table_from(doc.value("table", json()), index);
    const json& qa = require(doc, "qa", index);
    r.question = scalar_text(require(qa, "question", index), index, "question");
    if (const auto it = qa.find("answer"); it != qa.end() && !trim(scalar_text(*it, index, "answer")).empty()) {
        r.gold_answer = scalar_text(*it, index, "answer");
    } else if (const auto exe = qa.find("exe_ans"); exe != qa.end()) {
        r.gold_answer = scalar_text(*exe, index, "exe_ans");
    }
    return r;
}

QuestionRecord convfinqa_record(const json& doc, std::size_t index) {
    QuestionRecord r;
    r.dataset = DatasetKind::ConvFinQA;
    r.id = require_id(doc, index);
    r.pre_text = string_list(doc, "pre_text", index);
    r.post_text = string_list(doc, "post_text", index);
    r.table = table_from(doc.value("table", json()), index);
    const json& annotation = require(doc, "annotation", index);

    std::vector<std::string> questions;
    std::vector<std::string> answers;
    std::string gold;
    if (annotation.contains("cur_dial")) {
        // Turn-level layout: the dialogue so far, answer for the last turn.
        questions = string_list(annotation, "cur_dial", index);
        answers = string_list(annotation, "exe_ans_list", index);
        gold = scalar_text(require(annotation, "exe_ans", index), index, "exe_ans");
        if (questions.empty()) {
            throw MalformedRecord(index, "empty cur_dial");
        }
        if (answers.size() + 1 < questions.size()) {
            throw MalformedRecord(index, "exe_ans_list shorter than the dialogue history");
        }
    } else {
        questions = string_list(annotation, "dialogue_break", index);
        answers = string_list(annotation, "exe_ans_list", index);
        if (questions.empty() || questions.size() != answers.size()) {
            throw MalformedRecord(index, "dialogue_break and exe_ans_list must be non-empty and of equal length");
        }
        gold = answers.back();
    }
    for (std::size_t t = 0; t + 1 < questions.size(); ++t) {
        r.turn_history.emplace_back(questions[t], answers[t]);
    }
    r.question = questions.back();
    r.gold_answer = gold;
    return r;
}

std::string tatqa_gold(const json& question, std::size_t index) {
    const json& answer = require(question, "answer", index);
    std::string text;
    if (answer.is_array()) {
        for (std::size_t i = 0; i < answer.size(); ++i) {
            if (i > 0) text += ", ";
            text += scalar_text(answer[i], index, "answer");
        }
    } else {
        text = scalar_text(answer, index, "answer");
    }
    const std::string scale = question.value("scale", std::string());
    if (scale == "percent") {
        text += "%";
    } else if (scale == "thousand" || scale == "million" || scale == "billion") {
        text += " " + scale;
    }
    return text;
}

void tatqa_records(const json& doc, std::size_t index, std::vector<QuestionRecord>& out) {
    const json& table = require(doc, "table", index);
    Table parsed = table_from(table.is_object() ? table.value("table", json()) : table, index);

    std::vector<std::pair<long long, std::string>> paragraphs;
    if (const auto it = doc.find("paragraphs"); it != doc.end() && it->is_array()) {
        for (const auto& p : *it) {
            const long long order = p.value("order", static_cast<long long>(paragraphs.size()));
            paragraphs.emplace_back(order, scalar_text(require(p, "text", index), index, "paragraph text"));
        }
    }
    std::stable_sort(paragraphs.begin(), paragraphs.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    const json& questions = require(doc, "questions", index);
    if (!questions.is_array()) {
        throw MalformedRecord(index, "'questions' is not a list");
    }
    for (const auto& q : questions) {
        QuestionRecord r;
        r.dataset = DatasetKind::TATQA;
        r.id = trim(scalar_text(require(q, "uid", index), index, "uid"));
        r.question = scalar_text(require(q, "question", index), index, "question");
        r.gold_answer = tatqa_gold(q, index);
        r.table = parsed;
        for (const auto& [order, text] : paragraphs) {
            r.pre_text.push_back(text);
        }
        out.push_back(std::move(r));
    }
}

std::vector<json> read_documents(const std::filesystem::path& path) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw FileNotFound(path);
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FileNotFound(path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string content = buffer.str();

    std::vector<json> documents;
    const auto first = content.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
        return documents;
    }
    if (content[first] == '[') {
        json parsed = json::parse(content, nullptr, false);
        if (parsed.is_discarded() || !parsed.is_array()) {
            throw MalformedRecord(0, "file is not a valid JSON array");
        }
        for (auto& doc : parsed) {
            documents.push_back(std::move(doc));
        }
        return documents;
    }
    std::istringstream lines(content);
    std::string line;
    while (std::getline(lines, line)) {
        if (trim(line).empty()) {
            continue;
        }
        json parsed = json::parse(line, nullptr, false);
        if (parsed.is_discarded()) {
            throw MalformedRecord(documents.size(), "line is not valid JSON");
        }
        documents.push_back(std::move(parsed));
    }
    return documents;
}

void escape_cell(std::string_view cell, std::string& out) {
    for (char c : cell) {
        switch (c) {
        case '|': out += "\\|"; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c);
        }
    }
}

void append_row(const std::vector<std::string>& row, std::size_t columns, std::string& out) {
    out += "|";
    for (std::size_t c = 0; c < columns; ++c) {
        out += " ";
        if (c < row.size()) {
            escape_cell(row[c], out);
        }
        out += " |";
    }
}

std::string join_paragraphs(const std::vector<std::string>& paragraphs) {
    std::string out;
    for (const auto& p : paragraphs) {
        const std::string t = trim(p);
        if (t.empty()) {
            continue;
        }
        if (!out.empty()) out += "\n";
        out += t;
    }
    return out;
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::FinQA: return "FinQA";
    case DatasetKind::ConvFinQA: return "ConvFinQA";
    case DatasetKind::TATQA: return "TATQA";
    }
    return "FinQA";
}

std::string_view display_name(DatasetKind kind) { return kind == DatasetKind::TATQA ? "TAT-QA" : to_string(kind); }

std::optional<DatasetKind> parse_dataset_kind(std::string_view text) {
    for (auto k : {DatasetKind::FinQA, DatasetKind::ConvFinQA, DatasetKind::TATQA}) {
        if (to_string(k) == text || display_name(k) == text) return k;
    }
    return std::nullopt;
}

std::optional<DatasetFormat> parse_dataset_format(std::string_view text) {
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lowered == "finqa") return DatasetFormat::FinQA;
    if (lowered == "convfinqa") return DatasetFormat::ConvFinQA;
    if (lowered == "tatqa" || lowered == "tat-qa") return DatasetFormat::TATQA;
    if (lowered == "canonical") return DatasetFormat::Canonical;
    return std::nullopt;
}

std::size_t Table::column_count() const {
    std::size_t columns = 0;
    for (const auto& row : rows) columns = std::max(columns, row.size());
    return columns;
}

void Table::pad() {
    const std::size_t columns = column_count();
    for (auto& row : rows) row.resize(columns);
}

std::vector<QuestionRecord> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    const auto documents = read_documents(path);
    std::vector<QuestionRecord> records;
    records.reserve(documents.size());
    for (std::size_t i = 0; i < documents.size(); ++i) {
        const json& doc = documents[i];
        if (!doc.is_object()) {
            throw MalformedRecord(i, "record is not a JSON object");
        }
        switch (format) {
        case DatasetFormat::FinQA: records.push_back(finqa_record(doc, i)); break;
        case DatasetFormat::ConvFinQA: records.push_back(convfinqa_record(doc, i)); break;
        case DatasetFormat::TATQA: tatqa_records(doc, i, records); break;
        case DatasetFormat::Canonical:
            try {
                records.push_back(record_from_json(doc));
            } catch (const std::exception& e) {
                throw MalformedRecord(i, e.what());
            }
            break;
        }
    }

    std::set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (trim(r.question).empty()) {
            throw MalformedRecord(i, "empty question");
        }
        if (!seen.insert(r.id).second) {
            throw MalformedRecord(i, "duplicate id " + r.id);
        }
        if (r.dataset != DatasetKind::ConvFinQA && !r.turn_history.empty()) {
            throw MalformedRecord(i, "turn history on a non-conversational record");
        }
        if (trim(r.gold_answer).empty()) {
            throw MalformedRecord(i, "missing gold answer");
        }
    }
    return records;
}

std::vector<std::string> validate_records(std::span<const QuestionRecord> records) {
    std::vector<std::string> problems;
    std::set<std::string> seen;
    for (const auto& r : records) {
        if (trim(r.question).empty()) problems.push_back(r.id + ": empty question");
        if (!seen.insert(r.id).second) problems.push_back(r.id + ": duplicate id");
        if (r.dataset != DatasetKind::ConvFinQA && !r.turn_history.empty()) {
            problems.push_back(r.id + ": turn history on a non-conversational record");
        }
        const std::size_t columns = r.table.column_count();
        for (const auto& row : r.table.rows) {
            if (row.size() != columns) {
                problems.push_back(r.id + ": ragged table");
                break;
            }
        }
        if (!r.table.empty() && columns == 0) problems.push_back(r.id + ": table without columns");
    }
    return problems;
}

std::string linearize_table(const Table& table) {
    const std::size_t columns = table.column_count();
    if (table.rows.empty() || columns == 0) {
        return {};
    }
    std::string out;
    append_row(table.rows.front(), columns, out);
    out += "\n|";
    for (std::size_t c = 0; c < columns; ++c) {
        out += " --- |";
    }
    for (std::size_t r = 1; r < table.rows.size(); ++r) {
        out += "\n";
        append_row(table.rows[r], columns, out);
    }
    return out;
}

PromptContext build_context(const QuestionRecord& record) {
    std::vector<std::string> segments{join_paragraphs(record.pre_text), linearize_table(record.table),
                                      join_paragraphs(record.post_text)};
    if (!record.turn_history.empty()) {
        std::string history;
        for (const auto& [q, a] : record.turn_history) {
            if (!history.empty()) history += "\n";
            history += "Q: " + q + "\nA: " + a;
        }
        segments.push_back(std::move(history));
    }
    PromptContext out;
    for (const auto& s : segments) {
        if (s.empty()) continue;
        if (!out.context_text.empty()) out.context_text += "\n\n";
        out.context_text += s;
    }
    out.question_text = record.question;
    return out;
}

json to_json(const QuestionRecord& record) {
    json history = json::array();
    for (const auto& [q, a] : record.turn_history) {
        history.push_back(json::array({q, a}));
    }
    return json{
        {"id", record.id},
        {"dataset", to_string(record.dataset)},
        {"pre_text", record.pre_text},
        {"post_text", record.post_text},
        {"table", record.table.rows},
        {"question", record.question},
        {"turn_history", history},
        {"gold_answer", record.gold_answer},
    };
}

QuestionRecord record_from_json(const json& j) {
    QuestionRecord r;
    r.id = j.at("id").get<std::string>();
    const auto kind = parse_dataset_kind(j.at("dataset").get<std::string>());
    if (!kind) {
        throw DatasetError("unknown dataset tag " + j.at("dataset").dump());
    }
    r.dataset = *kind;
    r.pre_text = j.at("pre_text").get<std::vector<std::string>>();
    r.post_text = j.at("post_text").get<std::vector<std::string>>();
    r.table.rows = j.at("table").get<std::vector<std::vector<std::string>>>();
    r.table.pad();
    r.question = j.at("question").get<std::string>();
    for (const auto& turn : j.at("turn_history")) {
        r.turn_history.emplace_back(turn.at(0).get<std::string>(), turn.at(1).get<std::string>());
    }
    r.gold_answer = j.at("gold_answer").get<std::string>();
    return r;
}

void write_canonical(std::span<const QuestionRecord> records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DatasetError("cannot write " + path.string());
    }
    for (const auto& r : records) {
        out << to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
    if (!out) {
        throw DatasetError("write failed for " + path.string());
    }
}

}  // namespace reflectqa
