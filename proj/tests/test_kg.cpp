#include <doctest.h>

#include <atomic>
#include <json.hpp>
#include <set>
#include <thread>

#include "mgnn/kg/backends.hpp"
#include "mgnn/kg/builder.hpp"
#include "mgnn/kg/io.hpp"
#include "mgnn/kg/prompts.hpp"

#include <httplib.h>

using namespace mgnn::kg;

namespace {

MissionSpec shooting(int n_concepts = 20, int sub_depth = 1) {
  MissionSpec m;
  m.mission_id = "shooting";
  m.mission_text = "shooting";
  m.n_concepts = n_concepts;
  m.sub_depth = sub_depth;
  return m;
}

std::string words(int n, const std::string& prefix) {
  std::vector<std::string> w;
  for (int i = 0; i < n; ++i) w.push_back(prefix + std::to_string(i));
  return prompts::join(w);
}

ReplayLlm::Rule rule(std::optional<PromptKind> kind, std::vector<std::string> responses,
                     std::optional<std::string> subject = std::nullopt,
                     std::optional<bool> correction = std::nullopt) {
  ReplayLlm::Rule r;
  r.kind = kind;
  r.responses = std::move(responses);
  r.subject = subject;
  r.correction = correction;
  return r;
}

int count_kind(const std::vector<TraceEntry>& trace, const std::string& kind,
               const std::string& step = {}) {
  int n = 0;
  for (const auto& t : trace) n += t.kind == kind && (step.empty() || t.step == step);
  return n;
}

class CountingLlm final : public LlmClient {
public:
  explicit CountingLlm(LlmClient& inner) : inner_(inner) {}
  std::string complete(const LlmRequest& r) override {
    ++calls;
    return inner_.complete(r);
  }
  int calls = 0;

private:
  LlmClient& inner_;
};

class CountingConceptNet final : public ConceptNetClient {
public:
  explicit CountingConceptNet(ConceptNetClient& inner) : inner_(inner) {}
  std::set<std::string> related(std::string_view t) override {
    ++calls;
    return inner_.related(t);
  }
  int calls = 0;

private:
  ConceptNetClient& inner_;
};

}  // namespace

TEST_CASE("label normalization") {
  CHECK(normalize_label("  Fire   Arm\t") == "fire arm");
  CHECK(normalize_label("GUN") == "gun");
  CHECK(normalize_label("") == "");
}

TEST_CASE("reply parsing") {
  CHECK(prompts::parse_label_list("gun, Gun , muzzle") == std::vector<std::string>{"gun", "muzzle"});
  CHECK(prompts::parse_label_list("```\n\"gun\", 'smoke', flash.\n```") ==
        std::vector<std::string>{"gun", "smoke", "flash"});
  CHECK(prompts::parse_label_list("gun") == std::vector<std::string>{"gun"});
  CHECK_THROWS_AS(prompts::parse_label_list("I think the answer is a gun. Maybe."), MalformedResponse);
  CHECK_THROWS_AS(prompts::parse_label_list("   \n"), MalformedResponse);
  CHECK_THROWS_AS(prompts::parse_label_list(", ,"), MalformedResponse);
}

TEST_CASE("prompt templates carry the configured counts") {
  CHECK(prompts::initial_nodes_system(20).find("Observe 20 important words") != std::string::npos);
  CHECK(prompts::initial_nodes_system(30).find("Observe 30 important words") != std::string::npos);
  CHECK(prompts::next_nodes_system(20).find("must be 20.") != std::string::npos);
  CHECK(prompts::edges_system(5).find("Select maximum 5 words") != std::string::npos);
  const auto c = prompts::duplicate_nodes_correction({"gun"}, "Subject: shooting");
  CHECK(c.find("already appear in previous levels: gun") != std::string::npos);
  CHECK(c.find("Subject: shooting") != std::string::npos);
}

TEST_CASE("generate_initial_concepts") {
  MapConceptNet cn;
  SUBCASE("twenty words") {
    ReplayLlm llm({rule(PromptKind::InitialNodes, {words(20, "w")})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_initial_concepts().size() == 20);
  }
  SUBCASE("duplicates collapse") {
    ReplayLlm llm({rule(PromptKind::InitialNodes, {"gun, GUN, muzzle"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_initial_concepts() == std::vector<std::string>{"gun", "muzzle"});
  }
  SUBCASE("prose is malformed") {
    ReplayLlm llm({rule(PromptKind::InitialNodes, {"Sure! Here are some words you might see."})});
    KgBuilder b(shooting(), llm, cn);
    CHECK_THROWS_AS(b.generate_initial_concepts(), MalformedResponse);
  }
  SUBCASE("overlong list truncated to n_concepts") {
    ReplayLlm llm({rule(PromptKind::InitialNodes, {words(25, "w")})});
    KgBuilder b(shooting(20), llm, cn);
    CHECK(b.generate_initial_concepts().size() == 20);
    CHECK(count_kind(b.trace(), "truncate") == 1);
  }
}

TEST_CASE("suggest_related") {
  ReplayLlm llm({});
  MapConceptNet cn({{"gun", "firearm"}, {"muzzle", "barrel"}, {"gun", "barrel"}});
  KgBuilder b(shooting(), llm, cn);
  const auto s = b.suggest_related({"gun", "muzzle", "smoke"});
  CHECK(s.at("gun") == std::set<std::string>{"barrel", "firearm"});
  CHECK(s.at("smoke").empty());
  CHECK(s.at("muzzle").count("barrel") == 1);
  CHECK(count_kind(b.trace(), "conceptnet") == 3);
}

TEST_CASE("file-backed ConceptNet") {
  const auto path = std::filesystem::temp_directory_path() / "mgnn_cn_test.tsv";
  {
    std::ofstream out(path);
    out << "gun\tfirearm\n# comment\nmuzzle\tbarrel\n";
  }
  FileConceptNet cn(path);
  CHECK(cn.related("gun") == std::set<std::string>{"firearm"});
  CHECK(cn.related("firearm") == std::set<std::string>{"gun"});
  CHECK(cn.related("knife").empty());
  {
    std::ofstream out(path);
    out << "no tab here\n";
  }
  CHECK_THROWS(FileConceptNet(path));
  std::filesystem::remove(path);
}

TEST_CASE("generate_next_layer") {
  MapConceptNet cn;
  const std::vector<std::string> prev{"gun", "muzzle"};
  SUBCASE("fresh words") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {words(20, "n")})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_next_layer(prev, {}, 2).size() == 20);
  }
  SUBCASE("repeated previous word is not filtered here") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {"gun, flash"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_next_layer(prev, {}, 2) == std::vector<std::string>{"gun", "flash"});
  }
  SUBCASE("empty suggestions still issue the prompt") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {"flash, bang"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_next_layer(prev, Suggestions{}, 2).size() == 2);
    REQUIRE(count_kind(b.trace(), "llm") == 1);
    const auto& prompt = b.trace().back().prompt;
    CHECK(prompt.find("Suggested keywords: ") != std::string::npos);
    CHECK(prompt.substr(prompt.size() - 20) == "Suggested keywords: ");
  }
}

TEST_CASE("generate_edges") {
  MapConceptNet cn;
  std::vector<std::string> prev;
  for (int i = 0; i < 20; ++i) prev.push_back("p" + std::to_string(i));
  SUBCASE("three parents") {
    ReplayLlm llm({rule(PromptKind::Edges, {"p1, p5, p9"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_edges("flash", prev, 2) == std::vector<std::string>{"p1", "p5", "p9"});
  }
  SUBCASE("overflow keeps the first max_parents") {
    ReplayLlm llm({rule(PromptKind::Edges, {"p1, p2, p3, p4, p5, p6"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_edges("flash", prev, 2) ==
          std::vector<std::string>{"p1", "p2", "p3", "p4", "p5"});
    REQUIRE(count_kind(b.trace(), "truncate") == 1);
    CHECK(b.trace().back().detail.find("p6") != std::string::npos);
  }
  SUBCASE("unknown parent passes through") {
    ReplayLlm llm({rule(PromptKind::Edges, {"p1, laser"})});
    KgBuilder b(shooting(), llm, cn);
    CHECK(b.generate_edges("flash", prev, 2) == std::vector<std::string>{"p1", "laser"});
  }
}

TEST_CASE("detect_errors") {
  const std::vector<std::vector<std::string>> earlier{{"gun", "muzzle"}};
  SUBCASE("duplicate node") {
    const auto v = detect_errors({"gun", "flash"}, {}, earlier);
    REQUIRE(v.size() == 1);
    CHECK(v[0].type == Violation::Type::DuplicateNode);
    CHECK(v[0].label == "gun");
    CHECK(v[0].earlier_layer == 1);
  }
  SUBCASE("clean layer") {
    CHECK(detect_errors({"flash"}, {{"flash", {"gun", "muzzle"}}}, earlier).empty());
  }
  SUBCASE("only parent invalid") {
    const auto v = detect_errors({"flash"}, {{"flash", {"laser"}}}, earlier);
    REQUIRE(v.size() == 2);
    CHECK(v[0].type == Violation::Type::InvalidEdge);
    CHECK(v[0].parent == "laser");
    CHECK(v[1].type == Violation::Type::ZeroParents);
  }
  SUBCASE("duplicates against deeper history") {
    const auto v = detect_errors({"flash"}, {}, {{"flash"}, {"gun"}});
    REQUIRE(v.size() == 1);
    CHECK(v[0].earlier_layer == 1);
  }
  SUBCASE("ConceptNet-restricted edges") {
    Suggestions cn{{"gun", {"flash"}}, {"muzzle", {}}};
    const auto v = detect_errors({"flash"}, {{"flash", {"gun", "muzzle"}}}, earlier, &cn);
    REQUIRE(v.size() == 1);
    CHECK(v[0].parent == "muzzle");
  }
}

TEST_CASE("repair_or_prune") {
  MapConceptNet cn;
  const std::vector<std::vector<std::string>> earlier{{"gun", "muzzle"}};
  auto draft_with = [](std::vector<std::string> candidates) {
    LayerDraft d;
    d.layer = 2;
    d.candidates = candidates;
    d.node_reply = prompts::join(candidates);
    d.node_user_prompt = "Subject: shooting";
    return d;
  };

  SUBCASE("duplicate fixed on the first attempt") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {"flash, smoke"}, std::nullopt, true)});
    KgBuilder b(shooting(), llm, cn);
    auto d = draft_with({"gun", "smoke"});
    b.repair_or_prune(detect_errors(d.candidates, {}, earlier), d, earlier, {});
    CHECK(d.candidates == std::vector<std::string>{"flash", "smoke"});
    CHECK(count_kind(b.trace(), "llm") == 1);
    CHECK(count_kind(b.trace(), "prune") == 0);
  }
  SUBCASE("persistent duplicate is pruned after three attempts") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {"gun, smoke"}, std::nullopt, true)});
    KgBuilder b(shooting(), llm, cn);
    auto d = draft_with({"gun", "smoke"});
    b.repair_or_prune(detect_errors(d.candidates, {}, earlier), d, earlier, {});
    CHECK(d.candidates == std::vector<std::string>{"smoke"});
    CHECK(count_kind(b.trace(), "llm", "node_correction") == 3);
    CHECK(count_kind(b.trace(), "prune") == 1);
  }
  SUBCASE("everything pruned") {
    ReplayLlm llm({rule(PromptKind::NextNodes, {"gun, muzzle"}, std::nullopt, true)});
    KgBuilder b(shooting(), llm, cn);
    auto d = draft_with({"gun", "muzzle"});
    CHECK_THROWS_AS(b.repair_or_prune(detect_errors(d.candidates, {}, earlier), d, earlier, {}),
                    EmptyLayer);
  }
  SUBCASE("edge correction replaces the claimed parents") {
    ReplayLlm llm({rule(PromptKind::Edges, {"muzzle"}, std::string("flash"), true)});
    KgBuilder b(shooting(), llm, cn);
    auto d = draft_with({"flash"});
    d.claimed["flash"] = {"laser"};
    d.edge_replies["flash"] = "laser";
    b.repair_or_prune(detect_errors(d.candidates, d.claimed, earlier), d, earlier, {});
    CHECK(d.claimed.at("flash") == std::vector<std::string>{"muzzle"});
    CHECK(count_kind(b.trace(), "llm", "edge_correction") == 1);
  }
  SUBCASE("zero parents falls back to ConceptNet, else prunes") {
    ReplayLlm llm({rule(PromptKind::Edges, {"laser"})});
    KgBuilder b(shooting(), llm, cn);
    auto d = draft_with({"flash", "bang"});
    d.claimed["flash"] = {"laser"};
    d.claimed["bang"] = {"laser"};
    const Suggestions sugg{{"gun", {"bang"}}, {"muzzle", {}}};
    b.repair_or_prune(detect_errors(d.candidates, d.claimed, earlier), d, earlier, sugg);
    CHECK(d.candidates == std::vector<std::string>{"bang"});
    CHECK(d.conceptnet_parents.at("bang") == std::vector<std::string>{"gun"});
  }
}

TEST_CASE("assemble_graph") {
  SUBCASE("hand-enumerated six-node graph") {
    auto m = shooting(2, 1);
    const auto g = assemble_graph({{"a", "b"}, {"c", "d"}},
                                  {{"a", "c"}, {"b", "c"}, {"b", "d"}}, m);
    CHECK(g.nodes.size() == 6);
    REQUIRE(g.edges.size() == 7);
    std::set<std::pair<std::string, std::string>> got;
    auto label = [&](const std::string& id) {
      const auto& n = g.nodes[g.find(id)];
      return n.label.empty() ? n.id : n.label;
    };
    for (const auto& e : g.edges) got.emplace(label(e.src), label(e.dst));
    const std::set<std::pair<std::string, std::string>> want{
        {"sensor", "a"}, {"sensor", "b"}, {"a", "c"}, {"b", "c"},
        {"b", "d"},      {"c", "encoding"}, {"d", "encoding"}};
    CHECK(got == want);
    CHECK(validate_graph(g).empty());
  }
  SUBCASE("no sub layers") {
    auto m = shooting(2, 0);
    const auto g = assemble_graph({{"a", "b"}}, {}, m);
    CHECK(g.edges.size() == 4);
    CHECK(count_kind(g.trace, "warning") == 1);
    CHECK(validate_graph(g).empty());
  }
  SUBCASE("an inner sub node is not a leaf") {
    auto m = shooting(2, 2);
    const auto g = assemble_graph({{"a"}, {"c", "d"}, {"e"}}, {{"a", "c"}, {"a", "d"}, {"c", "e"}}, m);
    const int enc = g.encoding_index();
    std::set<std::string> fanin;
    for (const auto& e : g.edges)
      if (e.dst == g.nodes[enc].id) fanin.insert(g.nodes[g.find(e.src)].label);
    CHECK(fanin == std::set<std::string>{"d", "e"});
    CHECK(validate_graph(g).empty());
  }
  SUBCASE("dangling edge label is rejected") {
    CHECK_THROWS_AS(assemble_graph({{"a"}, {"c"}}, {{"zzz", "c"}}, shooting(1, 1)), StructuralViolation);
  }
}

TEST_CASE("validate_graph catches injected defects") {
  const auto good = assemble_graph({{"a", "b"}, {"c", "d"}}, {{"a", "c"}, {"b", "c"}, {"b", "d"}},
                                   shooting(2, 1));
  auto has_rule = [](const std::vector<GraphViolation>& v, const std::string& rule) {
    return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.rule == rule; });
  };
  SUBCASE("back edge") {
    auto g = good;
    g.edges.push_back({g.nodes[g.find("L2_0")].id, "L1_0", EdgeProvenance::LlmSelected});
    const auto v = validate_graph(g);
    CHECK(has_rule(v, "acyclicity"));
  }
  SUBCASE("duplicate label across layers") {
    auto g = good;
    g.nodes[g.find("L2_1")].label = "A";
    CHECK(has_rule(validate_graph(g), "uniqueness"));
  }
  SUBCASE("leaf missing from encoding fan-in") {
    auto g = good;
    g.edges.pop_back();
    CHECK(has_rule(validate_graph(g), "fanin"));
  }
  SUBCASE("key concept with an extra parent") {
    auto g = good;
    g.nodes.push_back({"L1_9", "z", NodeKind::KeyConcept, 1});
    g.edges.push_back({"sensor", "L1_9", EdgeProvenance::SensorFanout});
    g.edges.push_back({"L1_0", "L1_9", EdgeProvenance::LlmSelected});
    CHECK_FALSE(validate_graph(g).empty());
  }
}

TEST_CASE("end-to-end build from a replay fixture") {
  ReplayLlm llm({rule(PromptKind::InitialNodes, {"gun, muzzle, smoke"}),
                 rule(PromptKind::NextNodes, {"flash, bang"}),
                 rule(PromptKind::Edges, {"muzzle, gun"}, std::string("flash")),
                 rule(PromptKind::Edges, {"gun"}, std::string("bang"))});
  MapConceptNet cn(std::vector<std::pair<std::string, std::string>>{{"gun", "firearm"}});
  KgBuilder b(shooting(3, 1), llm, cn);
  const auto g = b.build();
  CHECK(g.nodes.size() == 7);
  CHECK(g.edges.size() == 8);
  CHECK(validate_graph(g).empty());
  CHECK(count_kind(g.trace, "conceptnet") == 3);

  const auto round = graph_from_json(graph_to_json(g));
  CHECK(graph_to_json(round) == graph_to_json(g));
  const auto j = nlohmann::json::parse(graph_to_json(g));
  for (const char* key : {"mission_id", "d_sub", "nodes", "edges", "trace"}) CHECK(j.contains(key));
  CHECK(j["nodes"][0].contains("layer"));
  CHECK(j["edges"][0].contains("provenance"));
}

TEST_CASE("procedural backend: adversarial generations stay valid and reproducible") {
  for (int d_sub : {1, 2}) {
    for (int width : {20, 30}) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        ProceduralLlm::Options o;
        o.seed = seed;
        o.duplicate_rate = 0.15;
        o.invalid_parent_rate = 0.3;
        o.overflow_rate = 0.2;
        o.malformed_rate = 0.3;
        o.persistent_rate = 0.1;
        ProceduralLlm inner(o);
        MapConceptNet inner_cn;
        CountingLlm llm(inner);
        CountingConceptNet cn(inner_cn);
        auto m = shooting(width, d_sub);
        m.mission_id = "m" + std::to_string(seed);
        KgBuilder b(m, llm, cn);
        const auto g = b.build();
        CAPTURE(seed);
        CHECK(validate_graph(g).empty());
        CHECK(count_kind(g.trace, "llm") == llm.calls);
        CHECK(count_kind(g.trace, "conceptnet") == cn.calls);

        ProceduralLlm again(o);
        KgBuilder b2(m, again, inner_cn);
        CHECK(graph_to_json(b2.build()) == graph_to_json(g));
      }
    }
  }
}

TEST_CASE("HTTP LLM backend speaks chat-completion JSON") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = nlohmann::json::parse(req.body);
    const auto& messages = body.at("messages");
    std::string content = messages.size() == 4 ? "fixed, list" : "gun, muzzle";
    if (req.get_header_value("Authorization") != "Bearer secret") content = "unauthorized";
    CHECK(messages[0].at("role") == "system");
    res.set_content(nlohmann::json{{"choices", {{{"message", {{"content", content}}}}}}}.dump(),
                    "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlm llm({"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "test-model",
               "secret"});
  LlmRequest r;
  r.system = "sys";
  r.user = "Subject: shooting";
  CHECK(llm.complete(r) == "gun, muzzle");
  r.previous_response = "gun, muzzle";
  r.correction = "fix it";
  CHECK(llm.complete(r) == "fixed, list");
  CHECK(hits == 2);

  HttpLlm bad({"http://127.0.0.1:" + std::to_string(port) + "/missing", "m", ""});
  CHECK_THROWS_AS(bad.complete(r), ServiceUnavailable);
  server.stop();
  t.join();
}

TEST_CASE("HTTP ConceptNet backend filters by relation") {
  httplib::Server server;
  server.Get("/query", [&](const httplib::Request& req, httplib::Response& res) {
    CHECK(req.get_param_value("node") == "/c/en/gun");
    CHECK(req.get_param_value("rel") == "/r/RelatedTo");
    nlohmann::json edges = nlohmann::json::array();
    edges.push_back({{"rel", {{"@id", "/r/RelatedTo"}}},
                     {"start", {{"@id", "/c/en/gun"}}},
                     {"end", {{"@id", "/c/en/fire_arm/n"}}}});
    edges.push_back({{"rel", {{"@id", "/r/RelatedTo"}}},
                     {"start", {{"@id", "/c/fr/pistolet"}}},
                     {"end", {{"@id", "/c/en/gun"}}}});
    edges.push_back({{"rel", {{"@id", "/r/IsA"}}},
                     {"start", {{"@id", "/c/en/gun"}}},
                     {"end", {{"@id", "/c/en/weapon"}}}});
    res.set_content(nlohmann::json{{"edges", edges}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  HttpConceptNet cn({"http://127.0.0.1:" + std::to_string(port), "/r/RelatedTo", 50, 5});
  CHECK(cn.related("gun") == std::set<std::string>{"fire arm"});
  server.stop();
  t.join();
}
