#include <atomic>
#include <cstdlib>
#include <thread>

#include "doctest.h"

#ifdef MATRYOSHKA_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include "matryoshka/backend.hpp"
#include "matryoshka/openai_backend.hpp"
#include "matryoshka/oracle_backend.hpp"

using namespace matryoshka;

namespace {

GenerationRequest request_for(std::string qid, int loop, int sample, Phase phase) {
    GenerationRequest req;
    req.prompt = "prompt text";
    req.tag = CallTag{std::move(qid), loop, sample, phase};
    return req;
}

OracleBackend oracle(OracleParams params, std::uint64_t seed = 1) {
    return OracleBackend(params, seed, {{"q", "42"}});
}

// Minimal chat-completions server on an ephemeral port.
class FakeServer {
public:
    explicit FakeServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post(R"(/v1/chat/completions)", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string ok_body(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 5}, {"total_tokens", 16}}}}
        .dump();
}

OpenAIConfig config_for(const FakeServer& server) {
    OpenAIConfig cfg;
    cfg.base_url = server.base_url();
    cfg.model = "test-model";
    cfg.api_key_env = "MATRYOSHKA_TEST_KEY";
    cfg.timeout_seconds = 5;
    cfg.retry.max_attempts = 3;
    return cfg;
}

}  // namespace

TEST_CASE("call tag keys and phase names round-trip") {
    CHECK(CallTag{"q7", 1, 3, Phase::verify}.key() == "q7/1/3/verify");
    for (Phase p : {Phase::answer, Phase::verify, Phase::summary, Phase::final_summary, Phase::judge}) {
        CHECK(parse_phase(to_string(p)) == p);
    }
    CHECK_THROWS(parse_phase("bogus"));
    CHECK(parse_backend_error_kind("rate_limited") == BackendErrorKind::rate_limited);
}

TEST_CASE("oracle answers follow degenerate probabilities") {
    OracleParams always;
    always.p = 1.0;
    auto right = oracle(always);
    const auto r = right.generate(request_for("q", 0, 1, Phase::answer));
    CHECK(r.text.find("\\boxed{42}") != std::string::npos);
    CHECK(extract_answer(r.text) == "42");
    CHECK(r.usage.completion_tokens == always.answer_tokens);
    CHECK(r.usage.prompt_tokens == 3);

    OracleParams never;
    never.p = 0.0;
    auto wrong = oracle(never);
    for (int m = 1; m <= 50; ++m) {
        const auto w = wrong.generate(request_for("q", 0, m, Phase::answer));
        const std::string ans = extract_answer(w.text);
        CHECK(ans.starts_with("WRONG-"));
        const int j = std::stoi(ans.substr(6));
        CHECK(j >= 1);
        CHECK(j <= never.wrong_answer_vocab);
    }
}

TEST_CASE("oracle is byte-identical for the same seed and tag") {
    OracleParams params;
    auto a = oracle(params, 99);
    auto b = oracle(params, 99);
    for (int m = 1; m <= 20; ++m) {
        const auto req = request_for("q", 1, m, Phase::answer);
        const auto x = a.generate(req);
        const auto y = b.generate(req);
        CHECK(x.text == y.text);
        CHECK(x.usage == y.usage);
    }
    auto c = oracle(params, 100);
    int differ = 0;
    for (int m = 1; m <= 64; ++m) {
        const auto req = request_for("q", 0, m, Phase::answer);
        differ += a.generate(req).text != c.generate(req).text;
    }
    CHECK(differ > 0);
}

TEST_CASE("oracle verify reads correctness from the subject text") {
    OracleParams params;
    params.tpr = 1.0;
    params.fpr = 0.0;
    auto o = oracle(params);
    auto req = request_for("q", 0, 1, Phase::verify);
    req.subject_texts = {"blah \\boxed{42}"};
    CHECK(judge(o.generate(req).text).accepted);
    req.subject_texts = {"blah \\boxed{WRONG-3}"};
    CHECK_FALSE(judge(o.generate(req).text).accepted);
    req.subject_texts = {};
    CHECK_THROWS_AS(o.generate(req), BackendError);
}

TEST_CASE("oracle summary uses s1 only when the pool holds a correct answer") {
    OracleParams params;
    params.s1 = 1.0;
    params.s0 = 0.0;
    auto o = oracle(params);
    auto req = request_for("q", 0, 0, Phase::final_summary);
    req.subject_texts = {"\\boxed{WRONG-1}", "\\boxed{42}"};
    CHECK(extract_answer(o.generate(req).text) == "42");
    req.subject_texts = {"\\boxed{WRONG-1}"};
    CHECK(extract_answer(o.generate(req).text) != "42");
    req.subject_texts = {};
    CHECK(extract_answer(o.generate(req).text) != "42");
}

TEST_CASE("oracle rejects unknown queries and invalid params") {
    auto o = oracle({});
    CHECK_THROWS_AS(o.generate(request_for("other", 0, 1, Phase::answer)), BackendError);
    o.set_shared_truth("5");
    CHECK_NOTHROW(o.generate(request_for("other", 0, 1, Phase::answer)));
    OracleParams bad;
    bad.p = 1.5;
    CHECK_THROWS_AS(OracleBackend(bad, 0, {}), ContractViolation);
}

TEST_CASE("oracle_decide degenerate probabilities and empirical rate") {
    int hits = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const CallTag tag{"q" + std::to_string(i), i % 3, i % 17, Phase::answer};
        CHECK_FALSE(oracle_decide(123, tag, 0.0));
        CHECK(oracle_decide(123, tag, 1.0));
        hits += oracle_decide(123, tag, 0.3);
    }
    CHECK(std::abs(hits / static_cast<double>(n) - 0.3) <= 0.005);
}

TEST_CASE("hash helpers") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    const CallTag t{"q", 0, 1, Phase::answer};
    CHECK(hash_call(1, t, "x") == hash_call(1, t, "x"));
    CHECK(hash_call(1, t, "x") != hash_call(1, t, "y"));
    CHECK(hash_call(1, t) != hash_call(2, t));
    // Field boundaries must not alias.
    CHECK(hash_call(1, {"q1", 1, 1, Phase::answer}) != hash_call(1, {"q", 11, 1, Phase::answer}));
    const double u = uniform_from_hash(~0ULL);
    CHECK(u < 1.0);
    CHECK(uniform_from_hash(0) == 0.0);
}

TEST_CASE("sampling params validation") {
    SamplingParams s;
    CHECK_NOTHROW(s.validate());
    s.temperature = -0.1;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    s = {};
    s.top_p = 0.0;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    s = {};
    s.max_tokens = 0;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
    s = {};
    s.top_k = 0;
    CHECK_THROWS_AS(s.validate(), ContractViolation);
}

TEST_CASE("throttled backend caps concurrency") {
    class Slow : public Backend {
    public:
        GenerationResult generate(const GenerationRequest&) override {
            const int now = ++active;
            int prev = peak.load();
            while (now > prev && !peak.compare_exchange_weak(prev, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            --active;
            return {};
        }
        std::string id() const override { return "slow"; }
        std::atomic<int> active{0};
        std::atomic<int> peak{0};
    };
    auto slow = std::make_shared<Slow>();
    ThrottledBackend throttled(slow, 2);
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { throttled.generate({}); });
    threads.clear();
    CHECK(slow->peak.load() <= 2);
    CHECK(slow->peak.load() >= 1);
}

TEST_CASE("request body carries sampling parameters and omits disabled top_k") {
    GenerationRequest req = request_for("q", 0, 1, Phase::answer);
    req.sampling = {0.7, 0.8, -1, 1234};
    auto body = OpenAICompatibleBackend::build_request_body("m", req);
    CHECK(body["model"] == "m");
    CHECK(body["messages"][0]["role"] == "user");
    CHECK(body["messages"][0]["content"] == "prompt text");
    CHECK(body["temperature"] == 0.7);
    CHECK(body["top_p"] == 0.8);
    CHECK(body["max_tokens"] == 1234);
    CHECK_FALSE(body.contains("top_k"));
    req.sampling.top_k = 20;
    CHECK(OpenAICompatibleBackend::build_request_body("m", req)["top_k"] == 20);
}

TEST_CASE("parse_response") {
    const CallTag tag{"q", 0, 1, Phase::answer};
    const auto ok = OpenAICompatibleBackend::parse_response(ok_body("hi"), tag, "x");
    CHECK(ok.text == "hi");
    CHECK(ok.usage.total() == 16);
    CHECK_THROWS_AS(OpenAICompatibleBackend::parse_response("nope", tag, "x"), BackendError);
    CHECK_THROWS_AS(OpenAICompatibleBackend::parse_response(R"({"choices":[]})", tag, "x"), BackendError);
    CHECK_THROWS_AS(OpenAICompatibleBackend::parse_response(
                        R"({"choices":[{"message":{"content":"a"}}],"usage":{"prompt_tokens":1,"completion_tokens":1,"total_tokens":5}})",
                        tag, "x"),
                    BackendError);
}

TEST_CASE("retry policy ceilings double up to the cap") {
    RetryPolicy p;
    CHECK(p.delay_ceiling_seconds(1) == 1.0);
    CHECK(p.delay_ceiling_seconds(2) == 2.0);
    CHECK(p.delay_ceiling_seconds(5) == 16.0);
    CHECK(p.delay_ceiling_seconds(6) == 30.0);
    CHECK(p.delay_ceiling_seconds(40) == 30.0);
}

TEST_CASE("remote backend talks to a chat-completions server") {
    std::atomic<int> calls{0};
    std::string seen_auth;
    nlohmann::json seen_body;
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        seen_auth = req.get_header_value("Authorization");
        seen_body = nlohmann::json::parse(req.body);
        res.set_content(ok_body("FINAL ANSWER: 3"), "application/json");
    });
    std::vector<std::chrono::milliseconds> sleeps;
    OpenAICompatibleBackend backend(config_for(server), [&](auto d) { sleeps.push_back(d); });
    CHECK(backend.id() == "openai:test-model");

    ::unsetenv("MATRYOSHKA_TEST_KEY");
    auto result = backend.generate(request_for("q", 0, 1, Phase::answer));
    CHECK(result.text == "FINAL ANSWER: 3");
    CHECK(result.usage.prompt_tokens == 11);
    CHECK(result.backend_id == "openai:test-model");
    CHECK(seen_auth.empty());
    CHECK(seen_body["model"] == "test-model");

    ::setenv("MATRYOSHKA_TEST_KEY", "sekrit", 1);
    backend.generate(request_for("q", 0, 2, Phase::answer));
    CHECK(seen_auth == "Bearer sekrit");
    ::unsetenv("MATRYOSHKA_TEST_KEY");
    CHECK(calls == 2);
    CHECK(sleeps.empty());
}

TEST_CASE("remote backend retries 429 and 5xx with bounded jitter") {
    std::atomic<int> calls{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        const int n = ++calls;
        if (n == 1) {
            res.status = 429;
        } else if (n == 2) {
            res.status = 503;
        } else {
            res.set_content(ok_body("done"), "application/json");
        }
    });
    std::vector<std::chrono::milliseconds> sleeps;
    OpenAICompatibleBackend backend(config_for(server), [&](auto d) { sleeps.push_back(d); });
    CHECK(backend.generate(request_for("q", 0, 1, Phase::answer)).text == "done");
    CHECK(calls == 3);
    REQUIRE(sleeps.size() == 2);
    CHECK(sleeps[0].count() <= 1000);
    CHECK(sleeps[1].count() <= 2000);
}

TEST_CASE("remote backend gives up after the retry budget with the call tag") {
    std::atomic<int> calls{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
    });
    OpenAICompatibleBackend backend(config_for(server), [](auto) {});
    try {
        backend.generate(request_for("q9", 1, 2, Phase::verify));
        FAIL("expected an error");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendErrorKind::server);
        CHECK(err.tag().key() == "q9/1/2/verify");
    }
    CHECK(calls == 3);
}

TEST_CASE("remote backend does not retry context overflow or bad requests") {
    std::atomic<int> calls{0};
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        ++calls;
        res.status = 400;
        const bool overflow = nlohmann::json::parse(req.body)["max_tokens"] == 99;
        res.set_content(overflow ? R"({"error":{"code":"context_length_exceeded"}})" : R"({"error":"bad"})",
                        "application/json");
    });
    OpenAICompatibleBackend backend(config_for(server), [](auto) {});
    auto req = request_for("q", 0, 1, Phase::answer);
    req.sampling.max_tokens = 99;
    try {
        backend.generate(req);
        FAIL("expected an error");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendErrorKind::context_overflow);
        CHECK_FALSE(err.retryable());
    }
    CHECK(calls == 1);
    req.sampling.max_tokens = 100;
    try {
        backend.generate(req);
        FAIL("expected an error");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendErrorKind::bad_request);
    }
    CHECK(calls == 2);
}

TEST_CASE("remote backend reports transport failures") {
    OpenAIConfig cfg;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.model = "m";
    cfg.timeout_seconds = 2;
    cfg.retry.max_attempts = 2;
    int sleeps = 0;
    OpenAICompatibleBackend backend(cfg, [&](auto) { ++sleeps; });
    try {
        backend.generate(request_for("q", 0, 1, Phase::answer));
        FAIL("expected an error");
    } catch (const BackendError& err) {
        CHECK(err.kind() == BackendErrorKind::transport);
    }
    CHECK(sleeps == 1);
}
