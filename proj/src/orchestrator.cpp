#include "reflectqa/orchestrator.hpp"

#include <atomic>
#include <mutex>
#include <thread>

namespace reflectqa {

namespace {

// One question's conversation state while its pipeline runs.
class PipelineRun {
public:
    PipelineRun(Backend& backend, const QuestionRecord& record, PipelineResult result)
        : backend_(backend), record_(record), context_(build_context(record)), result_(std::move(result)) {
        result_.question_id = record.id;
    }

    std::string ask(const AgentSpec& agent, std::vector<ChatMessage> turns) {
        CompletionRequest request;
        request.model = agent.model;
        request.temperature = agent.temperature;
        request.max_tokens = agent.max_tokens;
        request.messages.push_back({Role::System, agent.system_prompt});
        for (auto& turn : turns) request.messages.push_back(std::move(turn));

        CompletionResult completion;
        try {
            completion = backend_.complete(request);
        } catch (const std::exception& e) {
            const std::string message = agent.name + " call failed: " + e.what();
            PipelineResult partial = result_;
            partial.error = message;
            throw PipelineError(record_.id, message, std::move(partial));
        }
        result_.total_prompt_tokens += completion.prompt_tokens;
        result_.total_completion_tokens += completion.completion_tokens;
        result_.tokens_estimated = result_.tokens_estimated || completion.tokens_estimated;
        std::string text = completion.text;
        result_.transcript.push_back({agent.name, std::move(request), std::move(completion)});
        return text;
    }

    std::string expert_query() const { return render_expert_query(context_.context_text, context_.question_text); }

    void run_expert(const AgentSpec& expert) {
        result_.initial_answer = ask(expert, {{Role::User, expert_query()}});
    }

    std::string run_critic(const AgentSpec& critic, std::optional<std::string_view> prior_feedback) {
        return ask(critic, {{Role::User, render_critic_query(context_.context_text, context_.question_text,
                                                             result_.initial_answer, prior_feedback)}});
    }

    void run_revision(const AgentSpec& expert) {
        result_.revised_answer = ask(expert, {{Role::User, expert_query()},
                                              {Role::Assistant, result_.initial_answer},
                                              {Role::User, render_revision_query(result_.reflections)}});
    }

    void critic_stage(PipelineSetting setting, const AgentSpec& expert, const AgentSpec& critic,
                      const AgentSpec& critic_extraction, const AgentSpec& critic_calculation) {
        result_.setting = setting;
        switch (setting) {
        case PipelineSetting::Single:
            return;
        case PipelineSetting::TwoAgent:
            result_.reflections.push_back(run_critic(critic, std::nullopt));
            break;
        case PipelineSetting::ThreeAgent: {
            result_.reflections.push_back(run_critic(critic_extraction, std::nullopt));
            const std::string first = result_.reflections.front();
            result_.reflections.push_back(run_critic(critic_calculation, first));
            break;
        }
        }
        run_revision(expert);
    }

    PipelineResult take() { return std::move(result_); }

private:
    Backend& backend_;
    const QuestionRecord& record_;
    PromptContext context_;
    PipelineResult result_;
};

EvalRecord failed_record(const std::string& question_id, EvalStage stage, const std::string& gold,
                         const std::string& error) {
    EvalRecord record;
    record.question_id = question_id;
    record.stage = stage;
    record.predicted = ExtractedAnswer{AnswerKind::Text, {}, Scale::Unit, ""};
    record.gold = gold;
    record.correct = false;
    record.error = error;
    return record;
}

}  // namespace

PipelineResult run_single(Backend& backend, const QuestionRecord& record, const AgentSpec& expert) {
    PipelineRun run(backend, record, {});
    run.run_expert(expert);
    return run.take();
}

PipelineResult run_two_agent(Backend& backend, const QuestionRecord& record, const AgentSpec& expert,
                             const AgentSpec& critic) {
    PipelineRun run(backend, record, {});
    run.run_expert(expert);
    run.critic_stage(PipelineSetting::TwoAgent, expert, critic, critic, critic);
    return run.take();
}

PipelineResult run_three_agent(Backend& backend, const QuestionRecord& record, const AgentSpec& expert,
                               const AgentSpec& critic_extraction, const AgentSpec& critic_calculation) {
    PipelineRun run(backend, record, {});
    run.run_expert(expert);
    run.critic_stage(PipelineSetting::ThreeAgent, expert, critic_extraction, critic_extraction, critic_calculation);
    return run.take();
}

PipelineResult reassess(Backend& backend, const QuestionRecord& record, PipelineResult single,
                        PipelineSetting setting, const AgentSpec& expert, const AgentSpec& critic,
                        const AgentSpec& critic_extraction, const AgentSpec& critic_calculation) {
    if (single.initial_answer.empty() || !single.reflections.empty()) {
        throw std::invalid_argument("reassess needs a finished single-agent result for " + record.id);
    }
    PipelineRun run(backend, record, std::move(single));
    run.critic_stage(setting, expert, critic, critic_extraction, critic_calculation);
    return run.take();
}

AgentTeam AgentTeam::from_registry(const PromptRegistry& registry, const std::string& expert_model,
                                   const std::string& critic_model, double temperature, int max_tokens) {
    return AgentTeam{
        registry.agent(AgentRole::Expert, expert_model, temperature, max_tokens),
        registry.agent(AgentRole::CriticGeneral, critic_model, temperature, max_tokens),
        registry.agent(AgentRole::CriticExtraction, critic_model, temperature, max_tokens),
        registry.agent(AgentRole::CriticCalculation, critic_model, temperature, max_tokens),
    };
}

std::vector<PipelineResult> run_batch(Backend& backend, std::span<const QuestionRecord> records, const AgentTeam& team,
                                      const BatchOptions& options, const ResultCallback& on_result) {
    if (options.concurrency == 0) {
        throw std::invalid_argument("concurrency must be positive");
    }
    std::vector<PipelineResult> results(records.size());
    std::atomic<std::size_t> next{0};
    std::mutex callback_mutex;

    const auto process = [&](const QuestionRecord& record) -> PipelineResult {
        PipelineResult result;
        try {
            result = run_single(backend, record, team.expert);
            bool go_on = false;
            switch (options.reassess) {
            case ReassessMode::None: go_on = false; break;
            case ReassessMode::All: go_on = true; break;
            case ReassessMode::Oracle:
                go_on = !exact_match(extract_answer(result.initial_answer), record.gold_answer, options.match);
                break;
            }
            if (go_on && options.setting != PipelineSetting::Single) {
                result = reassess(backend, record, std::move(result), options.setting, team.expert, team.critic,
                                  team.critic_extraction, team.critic_calculation);
            }
        } catch (const PipelineError& e) {
            result = e.partial();
        } catch (const std::exception& e) {
            result.question_id = record.id;
            result.error = e.what();
        }
        return result;
    };

    const auto worker = [&] {
        for (std::size_t i = next++; i < records.size(); i = next++) {
            results[i] = process(records[i]);
            if (on_result) {
                std::lock_guard lock(callback_mutex);
                on_result(i, results[i]);
            }
        }
    };

    const std::size_t thread_count = std::min(options.concurrency, records.size());
    if (thread_count <= 1) {
        worker();
        return results;
    }
    std::vector<std::jthread> threads;
    threads.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) threads.emplace_back(worker);
    threads.clear();
    return results;
}

std::vector<EvalRecord> evaluate_result(const PipelineResult& result, const std::string& gold,
                                        const MatchOptions& options) {
    std::vector<EvalRecord> out;
    if (result.initial_answer.empty() || result.transcript.empty()) {
        out.push_back(failed_record(result.question_id, EvalStage::Single, gold,
                                    result.error.value_or("no answer produced")));
        return out;
    }
    EvalRecord single = evaluate(result.question_id, EvalStage::Single, result.initial_answer, gold, options);
    const auto& first = result.transcript.front().result;
    single.prompt_tokens = first.prompt_tokens;
    single.completion_tokens = first.completion_tokens;
    single.tokens_estimated = first.tokens_estimated;
    out.push_back(std::move(single));

    if (result.setting == PipelineSetting::Single) {
        return out;
    }
    EvalRecord revised = result.revised_answer
                             ? evaluate(result.question_id, EvalStage::Revised, *result.revised_answer, gold, options)
                             : failed_record(result.question_id, EvalStage::Revised, gold,
                                             result.error.value_or("no revised answer produced"));
    for (std::size_t i = 1; i < result.transcript.size(); ++i) {
        const auto& step = result.transcript[i].result;
        revised.prompt_tokens += step.prompt_tokens;
        revised.completion_tokens += step.completion_tokens;
        revised.tokens_estimated = revised.tokens_estimated || step.tokens_estimated;
    }
    out.push_back(std::move(revised));
    return out;
}

}  // namespace reflectqa
