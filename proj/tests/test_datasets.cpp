#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "steerkit/datasets.hpp"

using namespace steerkit;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "steerkit_datasets";
    std::filesystem::create_directories(dir);
    return dir / name;
}

} // namespace

TEST_CASE("generation is a pure function of the seed") {
    AgreementData a = generate_agreement_task(7, 40);
    AgreementData b = generate_agreement_task(7, 40);
    REQUIRE(a.corpus == b.corpus);
    REQUIRE(a.contrast.positives == b.contrast.positives);
    REQUIRE(a.contrast.negatives == b.contrast.negatives);
    REQUIRE(a.task.items.size() == b.task.items.size());
    for (size_t i = 0; i < a.task.items.size(); ++i) {
        REQUIRE(a.task.items[i].context == b.task.items[i].context);
        REQUIRE(a.task.items[i].options == b.task.items[i].options);
        REQUIRE(a.task.items[i].split == b.task.items[i].split);
    }
    AgreementData c = generate_agreement_task(8, 40);
    REQUIRE(a.corpus != c.corpus);
}

TEST_CASE("contrast sets have the requested size") {
    AgreementData d = generate_agreement_task(3, 50);
    REQUIRE(d.contrast.positives.size() == 50);
    REQUIRE(d.contrast.negatives.size() == 50);
}

TEST_CASE("too few items is rejected") {
    REQUIRE_THROWS_AS(generate_agreement_task(1, 19), Error);
}

TEST_CASE("splits are disjoint, nonempty, and cover all items") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL, 11ULL}) {
        AgreementData d = generate_agreement_task(seed, 30);
        auto tr = d.task.split_indices(Split::train);
        auto va = d.task.split_indices(Split::val);
        auto te = d.task.split_indices(Split::test);
        REQUIRE(!tr.empty());
        REQUIRE(!va.empty());
        REQUIRE(!te.empty());
        REQUIRE(tr.size() + va.size() + te.size() == d.task.items.size());
        std::set<size_t> seen;
        for (auto* v : {&tr, &va, &te})
            for (size_t i : *v) REQUIRE(seen.insert(i).second);
    }
}

TEST_CASE("every item has two distinct single-token options") {
    AgreementData d = generate_agreement_task(9, 25);
    for (const auto& item : d.task.items) {
        REQUIRE(item.options.size() == 2);
        REQUIRE(item.options[0] != item.options[1]);
        REQUIRE(item.persona_option != item.correct_option);
    }
}

TEST_CASE("persona_metric extremes and symmetry") {
    AgreementData d = generate_agreement_task(5, 24);
    std::vector<EvalRecord> all_persona, alternating, complement;
    for (size_t i = 0; i < d.task.items.size(); ++i) {
        const int p = d.task.items[i].persona_option;
        const int o = 1 - p;
        all_persona.push_back({i, p, true, 1.0});
        alternating.push_back({i, i % 2 == 0 ? p : o, i % 2 == 0, 0.0});
        complement.push_back({i, i % 2 == 0 ? o : p, i % 2 != 0, 0.0});
    }
    REQUIRE(persona_metric(all_persona, d.task) == 100.0);
    REQUIRE(persona_metric(alternating, d.task) == 50.0);
    REQUIRE(persona_metric(alternating, d.task) + persona_metric(complement, d.task) == 100.0);
}

TEST_CASE("persona_metric rejects unknown item ids") {
    AgreementData d = generate_agreement_task(5, 24);
    std::vector<EvalRecord> recs{{999, 0, false, 0.0}};
    REQUIRE_THROWS_AS(persona_metric(recs, d.task), Error);
}

TEST_CASE("report-style fixture formats like an error-rate table cell") {
    // 7248 persona-consistent choices out of 10000
    PersonaTask task;
    task.items.resize(10000);
    for (auto& it : task.items) {
        it.options = {{1}, {2}};
        it.persona_option = 0;
        it.correct_option = 1;
    }
    std::vector<EvalRecord> recs;
    for (size_t i = 0; i < 10000; ++i)
        recs.push_back({i, i < 7248 ? 0 : 1, i < 7248, 0.0});
    const double rate = persona_metric(recs, task);
    REQUIRE(fmt_fixed(rate, 2) == "72.48");
}

TEST_CASE("contrast file round-trips") {
    AgreementData d = generate_agreement_task(13, 21);
    auto path = temp_file("contrast_rt.jsonl");
    save_contrast(path.string(), d.contrast, d.vocab);
    ContrastDataset r = load_contrast(path.string(), d.vocab);
    REQUIRE(r.positives == d.contrast.positives);
    REQUIRE(r.negatives == d.contrast.negatives);
}

TEST_CASE("minimal two-line contrast file loads") {
    AgreementData d = generate_agreement_task(1, 20);
    auto path = temp_file("contrast_min.jsonl");
    {
        std::ofstream out(path);
        out << R"({"text": "user thinks barn is red", "label": "pos"})" << "\n";
        out << R"({"text": "user thinks barn is blue", "label": "neg"})" << "\n";
    }
    ContrastDataset c = load_contrast(path.string(), d.vocab);
    REQUIRE(c.positives.size() == 1);
    REQUIRE(c.negatives.size() == 1);
}

TEST_CASE("contrast loader reports empty positives") {
    AgreementData d = generate_agreement_task(1, 20);
    auto path = temp_file("contrast_empty_pos.jsonl");
    {
        std::ofstream out(path);
        out << R"({"text": "user thinks barn is red", "label": "neg"})" << "\n";
    }
    REQUIRE_THROWS_WITH(load_contrast(path.string(), d.vocab),
                        Catch::Matchers::ContainsSubstring("EmptyPositives"));
}

TEST_CASE("contrast loader reports malformed lines with their line number") {
    AgreementData d = generate_agreement_task(1, 20);
    auto path = temp_file("contrast_bad.jsonl");
    {
        std::ofstream out(path);
        out << R"({"text": "user thinks barn is red", "label": "pos"})" << "\n";
        out << "{not json}" << "\n";
    }
    REQUIRE_THROWS_WITH(load_contrast(path.string(), d.vocab),
                        Catch::Matchers::ContainsSubstring(":2"));

    auto path2 = temp_file("contrast_missing.jsonl");
    {
        std::ofstream out(path2);
        out << R"({"text": "user thinks barn is red"})" << "\n";
    }
    REQUIRE_THROWS_WITH(load_contrast(path2.string(), d.vocab),
                        Catch::Matchers::ContainsSubstring("label"));
}

TEST_CASE("task file round-trips") {
    AgreementData d = generate_agreement_task(17, 22);
    auto path = temp_file("task_rt.jsonl");
    save_task(path.string(), d.task, d.vocab);
    PersonaTask r = load_task(path.string(), d.vocab);
    REQUIRE(r.items.size() == d.task.items.size());
    for (size_t i = 0; i < r.items.size(); ++i) {
        REQUIRE(r.items[i].context == d.task.items[i].context);
        REQUIRE(r.items[i].options == d.task.items[i].options);
        REQUIRE(r.items[i].persona_option == d.task.items[i].persona_option);
        REQUIRE(r.items[i].correct_option == d.task.items[i].correct_option);
        REQUIRE(r.items[i].split == d.task.items[i].split);
    }
}

TEST_CASE("vocab rejects unknown words with the word named") {
    AgreementData d = generate_agreement_task(1, 20);
    REQUIRE_THROWS_WITH(d.vocab.encode("user thinks zzz-not-a-word"),
                        Catch::Matchers::ContainsSubstring("zzz-not-a-word"));
}
