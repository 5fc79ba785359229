#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "matryoshka/prompts.hpp"

using namespace matryoshka;

namespace {

Query query(std::string prompt = "1+1?") { return Query{"q1", std::move(prompt), std::string("2")}; }

Candidate candidate(int loop, int sample, std::string answer, std::string reasoning = "work") {
    Candidate c;
    c.loop_index = loop;
    c.sample_index = sample;
    c.full_text = reasoning + " \\boxed{" + answer + "}";
    c.extracted_answer = answer;
    c.verdict = VerificationVerdict{"", true, true};
    return c;
}

CandidateSet pool_of(int count) {
    std::vector<Candidate> members;
    for (int i = 0; i < count; ++i) members.push_back(candidate(i / 8, i % 8 + 1, std::to_string(i)));
    return CandidateSet("q1").with(members);
}

}  // namespace

TEST_CASE("render_answer substitutes the question and adds the boxed instruction") {
    const auto tpl = PromptTemplate::parse(PromptRole::answer, "t", "Solve: {{question}}");
    const auto out = render_answer(tpl, query());
    CHECK(out.text.starts_with("Solve: 1+1?"));
    CHECK(out.text.find("\\boxed{}") != std::string::npos);
    CHECK(out.template_id == "t");
    CHECK(render_answer(tpl, query()).text == out.text);
}

TEST_CASE("templates are validated at load time") {
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::answer, "t", "Solve it."), TemplateError);
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::answer, "t", "{{question}} {{solution}}"), TemplateError);
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::answer, "t", "{{question}} {{nope}}"), TemplateError);
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::answer, "t", "{{question"), TemplateError);
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::verify, "t", "{{question}}"), TemplateError);
    CHECK_THROWS_AS(PromptTemplate::parse(PromptRole::summary, "t", "{{candidates}}"), TemplateError);
    CHECK_NOTHROW(PromptTemplate::parse(PromptRole::answer, "t", "{{ question }} twice {{question}}"));
}

TEST_CASE("render_verify embeds question, truncated solution and the verdict instruction") {
    const auto tpl = PromptTemplate::parse(PromptRole::verify, "v", "Q: {{question}}\nS: {{solution}}");
    Candidate c = candidate(0, 1, "2", std::string(100, 'r'));
    CandidateRendering r;
    r.per_candidate_chars = 20;
    const auto out = render_verify(tpl, query(), c, r);
    CHECK(out.text.starts_with("Q: 1+1?\nS: [...] "));
    CHECK(out.text.find("\\boxed{2}") != std::string::npos);
    CHECK(out.text.find("FINAL VERDICT: CORRECT") != std::string::npos);
    REQUIRE(out.subject_texts.size() == 1);
    CHECK(out.subject_texts[0] == c.full_text);
    CHECK(render_verify(tpl, query(), c, r).text == out.text);
    CHECK_THROWS_AS(render_verify(PromptTemplate::parse(PromptRole::answer, "a", "{{question}}"), query(), c),
                    ContractViolation);
}

TEST_CASE("render_summary ordering, truncation and reasoning flag") {
    const auto tpl = PromptTemplate::parse(PromptRole::summary, "s", "{{question}}\n{{candidates}}");

    SUBCASE("two candidates in (loop, sample) order") {
        const auto set = CandidateSet("q1").with(std::vector<Candidate>{candidate(1, 1, "b"), candidate(0, 2, "a")});
        const auto out = render_summary(tpl, query(), set, {});
        const auto first = out.text.find("Candidate 1 (answer: a):\n");
        const auto second = out.text.find("Candidate 2 (answer: b):\n");
        CHECK(first != std::string::npos);
        CHECK(second != std::string::npos);
        CHECK(first < second);
        CHECK(out.text.find("\\boxed{}") != std::string::npos);
    }
    SUBCASE("40 candidates capped at the 32 most recent") {
        CandidateRendering r;
        r.max_candidates = 32;
        const auto out = render_summary(tpl, query(), pool_of(40), r);
        CHECK(out.subject_texts.size() == 32);
        CHECK(out.text.find("Candidate 32 (answer: 39):") != std::string::npos);
        CHECK(out.text.find("Candidate 1 (answer: 8):") != std::string::npos);
        CHECK(out.text.find("Candidate 33:") == std::string::npos);
    }
    SUBCASE("answers only") {
        CandidateRendering r;
        r.include_full_reasoning = false;
        const auto out = render_summary(tpl, query(), pool_of(2), r);
        CHECK(out.text.find("Candidate 1: 0\n") != std::string::npos);
        CHECK(out.text.find("work") == std::string::npos);
    }
    SUBCASE("serialized count never exceeds max_candidates") {
        for (int n = 1; n <= 20; ++n) {
            for (std::size_t cap : {1u, 3u, 8u}) {
                CandidateRendering r;
                r.max_candidates = cap;
                CHECK(render_summary(tpl, query(), pool_of(n), r).subject_texts.size() == std::min<std::size_t>(n, cap));
            }
        }
    }
    SUBCASE("empty pool") {
        CHECK_THROWS_AS(render_summary(tpl, query(), CandidateSet("q1"), {}), ContractViolation);
        const auto out = render_summary(tpl, query(), CandidateSet("q1"), {}, true);
        CHECK(out.text.find("none available") != std::string::npos);
        CHECK(out.subject_texts.empty());
    }
    SUBCASE("unverified pool is labelled") {
        std::vector<Candidate> raw{candidate(0, 1, "x")};
        raw[0].unverified_fallback = true;
        const auto out = render_summary(tpl, query(), CandidateSet("q1").with(raw), {});
        CHECK(out.text.find("none of them passed verification") != std::string::npos);
    }
}

TEST_CASE("tail_excerpt does not split UTF-8 sequences") {
    const std::string text = "ααααα";  // 2 bytes each
    const std::string cut = tail_excerpt(text, 3);
    CHECK(cut == "[...] α");
    CHECK(tail_excerpt("short", 10) == "short");
}

TEST_CASE("shipped template files match the built-in defaults") {
    const std::filesystem::path dir = MATRYOSHKA_SOURCE_DIR "/templates";
    const auto loaded = TemplateSet::load(dir, "answer", "verify", "summary", "judge");
    CHECK(loaded.answer.text() == default_template_text(PromptRole::answer));
    CHECK(loaded.verify.text() == default_template_text(PromptRole::verify));
    CHECK(loaded.summary.text() == default_template_text(PromptRole::summary));
    CHECK(loaded.judge.text() == default_template_text(PromptRole::judge));
    CHECK_THROWS_AS(TemplateSet::load(dir, "missing", "verify", "summary", "judge"), TemplateError);
}

TEST_CASE("render_judge") {
    const auto set = TemplateSet::defaults();
    const auto out = render_judge(set.judge, query(), "3");
    CHECK(out.text.find("Reference answer: 2") != std::string::npos);
    CHECK(out.text.find("Predicted answer: 3") != std::string::npos);
    Query unlabeled{"u", "x", std::nullopt};
    CHECK_THROWS_AS(render_judge(set.judge, unlabeled, "3"), ContractViolation);
}
