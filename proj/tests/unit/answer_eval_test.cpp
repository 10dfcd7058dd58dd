#include "reflectqa/answer_eval.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <fstream>
#include <random>

using namespace reflectqa;

namespace {

nlohmann::json load_corpus(const std::string& name) {
    std::ifstream in(std::string(REFLECTQA_TEST_DATA) + "/" + name);
    return nlohmann::json::parse(in);
}

ExtractedAnswer numeric(const char* value, Scale scale = Scale::Unit) {
    ExtractedAnswer a;
    a.kind = AnswerKind::Numeric;
    a.value = *Decimal::parse(value);
    a.scale = scale;
    a.raw_span = value;
    return a;
}

EvalRecord record(std::string id, EvalStage stage, bool correct) {
    EvalRecord r;
    r.question_id = std::move(id);
    r.stage = stage;
    r.correct = correct;
    r.gold = "1";
    return r;
}

}  // namespace

TEST(ExtractAnswer, MarkerWithPercent) {
    const auto a = extract_answer("Some steps\nFinal Answer: 60.94%");
    EXPECT_EQ(a.kind, AnswerKind::Numeric);
    EXPECT_EQ(a.value, *Decimal::parse("60.94"));
    EXPECT_EQ(a.scale, Scale::Percent);
    EXPECT_EQ(a.raw_span, "60.94%");
}

TEST(ExtractAnswer, AccountingNegativeWithCurrencyAndScale) {
    const std::string text = "the decrease was $ (1,210) million";
    const auto a = extract_answer(text);
    EXPECT_EQ(a.kind, AnswerKind::Numeric);
    EXPECT_EQ(a.value, *Decimal::parse("-1210"));
    EXPECT_EQ(a.scale, Scale::Million);
    EXPECT_NE(text.find(a.raw_span), std::string::npos);
}

TEST(ExtractAnswer, LastLineTextFallback) {
    const auto a = extract_answer("No figures here.\n\n  The data is not available.  \n");
    EXPECT_EQ(a.kind, AnswerKind::Text);
    EXPECT_EQ(a.raw_span, "The data is not available.");
}

TEST(ExtractAnswer, MarkerOnItsOwnLine) {
    const auto a = extract_answer("Computation done.\nFinal Answer:\n\n12.5%\n");
    EXPECT_EQ(a.value, *Decimal::parse("12.5"));
    EXPECT_EQ(a.scale, Scale::Percent);
}

TEST(ExtractAnswer, LastMarkerWins) {
    const auto a = extract_answer("Final Answer: 10\nOn reflection...\nFinal Answer: 12");
    EXPECT_EQ(a.value, *Decimal::parse("12"));
}

TEST(ExtractAnswer, SubtractionIsNotANegativeSign) {
    const auto a = extract_answer("200 - 150");
    EXPECT_EQ(a.value, *Decimal::parse("150"));
}

TEST(ExtractAnswer, IdentifiersAreNotNumbers) {
    const auto a = extract_answer("Revenue in Q4 of FY2019");
    EXPECT_EQ(a.kind, AnswerKind::Text);
}

TEST(ExtractAnswer, EmptyInputIsEmptyText) {
    const auto a = extract_answer("");
    EXPECT_EQ(a.kind, AnswerKind::Text);
    EXPECT_EQ(a.raw_span, "");
}

TEST(ExtractAnswer, AgreesWithHandLabeledCorpus) {
    const auto corpus = load_corpus("extraction_corpus.json");
    ASSERT_EQ(corpus.size(), 50u);
    int agree = 0;
    for (const auto& item : corpus) {
        const std::string text = item["text"];
        const auto got = extract_answer(text);
        bool ok = false;
        if (item["kind"] == "text") {
            ok = got.kind == AnswerKind::Text && got.raw_span == item["raw"].get<std::string>();
        } else {
            ok = got.kind == AnswerKind::Numeric &&
                 got.value == *Decimal::parse(item["value"].get<std::string>()) &&
                 to_string(got.scale) == item["scale"].get<std::string>();
        }
        if (ok) {
            ++agree;
        } else {
            ADD_FAILURE() << "disagreement (tolerated up to 2): " << text << " -> " << render(got);
        }
        EXPECT_NE(text.find(got.raw_span), std::string::npos) << "raw span not a substring: " << text;
    }
    EXPECT_GE(agree, 48);
}

TEST(ExactMatch, SpecExamples) {
    EXPECT_TRUE(exact_match(numeric("5.0"), "5"));
    // 14.1 / 100 computed directly: 0.141
    EXPECT_EQ(Decimal::parse("14.1")->shifted(-2), *Decimal::parse("0.141"));
    EXPECT_TRUE(exact_match(numeric("14.1", Scale::Percent), "0.141"));
    // 0.142 - 0.141 = 0.001 > 5e-4 at gold precision d = 3
    EXPECT_FALSE(exact_match(numeric("14.2", Scale::Percent), "0.141"));
}

TEST(ExactMatch, MagnitudeDuality) {
    EXPECT_TRUE(exact_match(numeric("1210", Scale::Million), "1.21 billion"));
    EXPECT_FALSE(exact_match(numeric("1210", Scale::Million), "1.21 billion", {.strict_scale = true}));
}

TEST(ExactMatch, RelativeToleranceForLargeGold) {
    // d = 0 gives 0.5; 1e-6 * 2,000,000,000 = 2000 dominates
    EXPECT_TRUE(exact_match(numeric("2000001500"), "2000000000"));
    EXPECT_FALSE(exact_match(numeric("2000002500"), "2000000000"));
}

TEST(ExactMatch, EmptyGoldNeverMatches) {
    EXPECT_FALSE(exact_match(numeric("0"), ""));
    ExtractedAnswer empty_text;
    EXPECT_FALSE(exact_match(empty_text, "  "));
}

TEST(ExactMatch, HandLabeledNormalizationCorpus) {
    const auto corpus = load_corpus("normalization_corpus.json");
    ASSERT_GE(corpus.size(), 40u);
    for (const auto& item : corpus) {
        MatchOptions options;
        options.strict_scale = item.value("strict_scale", false);
        const auto predicted = extract_answer(item["prediction"].get<std::string>());
        EXPECT_EQ(exact_match(predicted, item["gold"].get<std::string>(), options), item["match"].get<bool>())
            << item["prediction"] << " vs " << item["gold"] << " (" << item["note"] << ")";
    }
}

TEST(ParseGold, NumericAndText) {
    EXPECT_EQ(parse_gold("-1210").kind, AnswerKind::Numeric);
    EXPECT_EQ(parse_gold("$ 1.2 million").scale, Scale::Million);
    EXPECT_EQ(parse_gold("12 dollars").kind, AnswerKind::Numeric);
    EXPECT_EQ(parse_gold("yes").kind, AnswerKind::Text);
    EXPECT_EQ(parse_gold("1, 2").kind, AnswerKind::Text);
    EXPECT_EQ(parse_gold("2008 and 2009").kind, AnswerKind::Text);
}

TEST(Normalization, RenderParseIdempotenceProperty) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<long long> coef(-99'999'999LL, 99'999'999LL);
    std::uniform_int_distribution<int> exp(-6, 3);
    std::uniform_int_distribution<int> scale(0, 4);
    for (int i = 0; i < 3000; ++i) {
        ExtractedAnswer x;
        x.kind = AnswerKind::Numeric;
        x.value = Decimal(coef(rng), exp(rng));
        x.scale = static_cast<Scale>(scale(rng));
        x.raw_span = render(x);
        const auto parsed = parse_gold(render(x));
        ASSERT_EQ(parsed.kind, AnswerKind::Numeric) << render(x);
        EXPECT_EQ(parsed.value, x.value) << render(x);
        EXPECT_EQ(parsed.scale, x.scale) << render(x);
        EXPECT_EQ(render(parsed), render(x));
        EXPECT_TRUE(exact_match(x, render(x))) << render(x);
        EXPECT_TRUE(exact_match(x, render(x), {.strict_scale = true})) << render(x);
    }
}

TEST(Gain, TableOneRowsFromEmPairs) {
    // Each value below is the plain two-decimal difference of the EM pair.
    EXPECT_DOUBLE_EQ(compute_gain(71.49, 56.94), 14.55);
    EXPECT_DOUBLE_EQ(compute_gain(86.84, 69.58), 17.26);
    EXPECT_DOUBLE_EQ(compute_gain(79.29, 72.36), 6.93);
    EXPECT_DOUBLE_EQ(compute_gain(83.45, 78.69), 4.76);
    EXPECT_DOUBLE_EQ(compute_gain(87.96, 80.30), 7.66);
    EXPECT_DOUBLE_EQ(compute_gain(72.48, 54.67), 17.81);
    EXPECT_DOUBLE_EQ(compute_gain(76.19, 72.36), 3.83);
    EXPECT_DOUBLE_EQ(compute_gain(82.58, 78.69), 3.89);
    EXPECT_DOUBLE_EQ(compute_gain(85.49, 80.30), 5.19);
    EXPECT_DOUBLE_EQ(compute_gain(42.42, 42.42), 0.0);
}

TEST(Score, EmPercentageRounding) {
    // 627 / 1147 = 0.546643... -> 54.66
    EXPECT_DOUBLE_EQ(em_percentage(627, 1147), 54.66);
    EXPECT_DOUBLE_EQ(em_percentage(0, 1147), 0.0);
    EXPECT_DOUBLE_EQ(em_percentage(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(em_percentage(1, 8), 12.5);  // 12.5 exactly
    EXPECT_DOUBLE_EQ(em_percentage(1, 3), 33.33);
    EXPECT_DOUBLE_EQ(em_percentage(2, 3), 66.67);
}

TEST(Score, CombinedWithoutRevisions) {
    std::vector<EvalRecord> single;
    for (int i = 0; i < 1147; ++i) single.push_back(record("q" + std::to_string(i), EvalStage::Single, i < 627));
    const auto score = score_combined(single, {});
    EXPECT_EQ(score.combined_correct, 627u);
    EXPECT_DOUBLE_EQ(score.combined_em, 54.66);
}

TEST(Score, ZeroCorrectAnywhere) {
    std::vector<EvalRecord> single{record("a", EvalStage::Single, false), record("b", EvalStage::Single, false)};
    std::vector<EvalRecord> revised{record("a", EvalStage::Revised, false)};
    EXPECT_DOUBLE_EQ(score_combined(single, revised).combined_em, 0.0);
}

TEST(Score, RevisionsAddRecoveredAnswers) {
    std::vector<EvalRecord> single{record("a", EvalStage::Single, true), record("b", EvalStage::Single, false),
                                   record("c", EvalStage::Single, false), record("d", EvalStage::Single, false)};
    std::vector<EvalRecord> revised{record("b", EvalStage::Revised, true), record("c", EvalStage::Revised, false)};
    const auto score = score_combined(single, revised);
    EXPECT_EQ(score.single_correct, 1u);
    EXPECT_EQ(score.recovered, 1u);
    EXPECT_DOUBLE_EQ(score.single_em, 25.0);
    EXPECT_DOUBLE_EQ(score.combined_em, 50.0);
}

TEST(Score, OverlapViolation) {
    std::vector<EvalRecord> single{record("a", EvalStage::Single, true)};
    std::vector<EvalRecord> revised{record("a", EvalStage::Revised, false)};
    EXPECT_THROW(score_combined(single, revised), OverlapViolation);
    EXPECT_NO_THROW(score_combined(single, revised, false));
}

TEST(Score, OracleMonotonicityProperty) {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 60);
        std::vector<EvalRecord> single;
        std::vector<EvalRecord> revised;
        for (int i = 0; i < n; ++i) {
            const bool ok = rng() % 2 == 0;
            single.push_back(record(std::to_string(i), EvalStage::Single, ok));
            if (!ok && rng() % 3 != 0) revised.push_back(record(std::to_string(i), EvalStage::Revised, rng() % 2 == 0));
        }
        const auto score = score_combined(single, revised);
        EXPECT_GE(score.combined_em, score.single_em);
        EXPECT_LE(score.combined_em, 100.0);
    }
}

TEST(ScoreReport, ModesDiffer) {
    std::vector<EvalRecord> evals{record("a", EvalStage::Single, true), record("a", EvalStage::Revised, false),
                                  record("b", EvalStage::Single, false), record("b", EvalStage::Revised, true)};
    const auto all = build_score_report("FinQA", "m", PipelineSetting::TwoAgent, ReassessMode::All, evals);
    EXPECT_DOUBLE_EQ(all.single_em, 50.0);
    EXPECT_DOUBLE_EQ(all.setting_em, 50.0);
    EXPECT_THROW(build_score_report("FinQA", "m", PipelineSetting::TwoAgent, ReassessMode::Oracle, evals),
                 OverlapViolation);
}

TEST(ScoreReport, CostSummary) {
    auto a = record("a", EvalStage::Single, true);
    a.prompt_tokens = 1000;
    a.completion_tokens = 500;
    auto b = record("b", EvalStage::Single, false);
    b.prompt_tokens = 1000;
    b.tokens_estimated = true;
    std::vector<EvalRecord> evals{a, b};
    const auto report = build_score_report("FinQA", "m", PipelineSetting::Single, ReassessMode::Oracle, evals,
                                           ModelPrice{0.5, 1.0});
    EXPECT_EQ(report.cost.prompt_tokens, 2000u);
    EXPECT_EQ(report.cost.completion_tokens, 500u);
    EXPECT_TRUE(report.cost.estimated);
    ASSERT_TRUE(report.cost.spend_usd);
    EXPECT_DOUBLE_EQ(*report.cost.spend_usd, 1.5);
}

TEST(ScoreTable, LayoutAndGainRow) {
    std::vector<ScoreReport> reports;
    auto add = [&](const char* dataset, PipelineSetting s, double single, double em) {
        ScoreReport r;
        r.dataset = dataset;
        r.model = "llama3-8b";
        r.setting = s;
        r.single_em = single;
        r.setting_em = em;
        reports.push_back(r);
    };
    add("TAT-QA", PipelineSetting::Single, 69.58, 69.58);
    add("FinQA", PipelineSetting::Single, 54.67, 54.67);
    add("FinQA", PipelineSetting::TwoAgent, 54.67, 64.10);
    add("FinQA", PipelineSetting::ThreeAgent, 54.67, 72.48);
    add("ConvFinQA", PipelineSetting::ThreeAgent, 56.94, 71.49);
    const std::string table = render_score_table(reports);
    EXPECT_EQ(table,
              "Setting       FinQA   ConvFinQA  TAT-QA\n"
              "Single-Agent  54.67   56.94      69.58\n"
              "Two-Agent     64.10   -          -\n"
              "Three-Agent   72.48   71.49      -\n"
              "gain          +17.81  +14.55     -\n");
}
