#include "bner/eval.hpp"

#include <cstdio>
#include <unordered_map>

#include <json.hpp>

#include "bner/common.hpp"

namespace bner {

double EvalReport::macro_f1() const {
    if (per_category.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [name, counts] : per_category) sum += counts.f1();
    return sum / static_cast<double>(per_category.size());
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    auto fill = [](const PrfCounts& c) {
        return nlohmann::ordered_json{{"gold", c.gold},
                                      {"predicted", c.predicted},
                                      {"correct", c.correct},
                                      {"precision", c.precision()},
                                      {"recall", c.recall()},
                                      {"f1", c.f1()}};
    };
    j["micro"] = fill(micro);
    j["macro_f1"] = macro_f1();
    auto& cats = j["categories"] = nlohmann::ordered_json::object();
    for (const auto& [name, counts] : per_category) cats[name] = fill(counts);
    return j.dump(2);
}

EvalReport evaluate(const Split& gold, const Split& predicted) {
    if (gold.size() != predicted.size())
        throw DataError("gold has " + std::to_string(gold.size()) + " sentences, predictions " +
                        std::to_string(predicted.size()));

    std::unordered_map<std::uint32_t, const AnnotatedSentence*> by_id;
    for (const auto& s : predicted) by_id[s.sentence.id] = &s;

    EvalReport report;
    for (const auto& g : gold) {
        auto it = by_id.find(g.sentence.id);
        if (it == by_id.end())
            throw DataError("no prediction for sentence id " + std::to_string(g.sentence.id));
        const auto& pred = it->second->gold;  // std::set: duplicates already collapsed

        for (const auto& gs : g.gold) {
            ++report.micro.gold;
            ++report.per_category[gs.category].gold;
        }
        for (const auto& ps : pred) {
            ++report.micro.predicted;
            ++report.per_category[ps.category].predicted;
            if (g.gold.count(ps)) {
                ++report.micro.correct;
                ++report.per_category[ps.category].correct;
            }
        }
    }
    return report;
}

std::string report_table(const std::vector<std::pair<std::string, EvalReport>>& reports) {
    std::size_t name_width = 6;
    for (const auto& [name, r] : reports) name_width = std::max(name_width, name.size());

    std::string out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-*s %6s %6s %6s\n", static_cast<int>(name_width), "system",
                  "P", "R", "F1");
    out += line;
    for (const auto& [name, r] : reports) {
        std::snprintf(line, sizeof(line), "%-*s %6.1f %6.1f %6.1f\n",
                      static_cast<int>(name_width), name.c_str(), 100.0 * r.micro.precision(),
                      100.0 * r.micro.recall(), 100.0 * r.micro.f1());
        out += line;
    }
    return out;
}

}  // namespace bner
