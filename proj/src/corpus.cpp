#include "biner/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace biner {

using nlohmann::json;

int EntityTypeSet::index_of(const std::string& label) const {
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    return -1;
}

EntityTypeSet EntityTypeSet::make(std::vector<std::string> labels, int max_types) {
    if (labels.empty()) throw DataError("entity type set must not be empty");
    if (static_cast<int>(labels.size()) > max_types)
        throw DataError("entity type set exceeds the per-batch maximum of " +
                        std::to_string(max_types));
    std::unordered_set<std::string> seen;
    for (const auto& l : labels) {
        if (l.empty()) throw DataError("entity type names must be non-empty");
        if (!seen.insert(l).second) throw DataError("duplicate entity type: " + l);
    }
    return EntityTypeSet{std::move(labels)};
}

std::vector<std::string> tokenize_whitespace(const std::string& text) {
    std::vector<std::string> words;
    size_t i = 0;
    const size_t n = text.size();
    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < n) {
        while (i < n && is_space(text[i])) ++i;
        size_t start = i;
        while (i < n && !is_space(text[i])) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

void validate_document(const AnnotatedDocument& doc) {
    const int len = static_cast<int>(doc.tokens.size());
    for (const auto& e : doc.entities) {
        if (e.type_name.empty()) throw DataError("entity with empty type name");
        if (e.start < 0 || e.start > e.end || e.end >= len) {
            std::ostringstream os;
            os << "entity span (" << e.start << "," << e.end << ") out of range for " << len
               << " tokens";
            throw DataError(os.str());
        }
    }
}

std::vector<AnnotatedDocument> load_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::vector<AnnotatedDocument> docs;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("parse error at line " + std::to_string(line_no) + ": " + e.what());
        }
        AnnotatedDocument doc;
        try {
            doc.tokens = j.at("tokens").get<std::vector<std::string>>();
            if (j.contains("entities")) {
                for (const auto& je : j.at("entities")) {
                    EntitySpan e;
                    e.start = je.at("start").get<int>();
                    e.end = je.at("end").get<int>();
                    e.type_name = je.at("type").get<std::string>();
                    doc.entities.push_back(std::move(e));
                }
            }
        } catch (const json::exception& e) {
            throw DataError("bad document at line " + std::to_string(line_no) + ": " + e.what());
        }
        try {
            validate_document(doc);
        } catch (const DataError& e) {
            throw DataError("document " + std::to_string(docs.size()) + " (line " +
                            std::to_string(line_no) + "): " + e.what());
        }
        docs.push_back(std::move(doc));
    }
    return docs;
}

void save_jsonl(const std::string& path, const std::vector<AnnotatedDocument>& docs) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (const auto& doc : docs) {
        json j;
        j["tokens"] = doc.tokens;
        j["entities"] = json::array();
        for (const auto& e : doc.entities)
            j["entities"].push_back({{"start", e.start}, {"end", e.end}, {"type", e.type_name}});
        os << j.dump() << "\n";
    }
}

namespace {

std::string joined(const std::vector<std::string>& tokens) {
    std::string s;
    for (const auto& t : tokens) {
        if (!s.empty()) s += ' ';
        s += t;
    }
    return s;
}

const char* kTypeNames[] = {"person",  "location", "organization", "product",
                            "event",   "chemical", "disease",      "vehicle",
                            "artwork", "award"};

}  // namespace

std::vector<std::string> synthetic_label_pool(int count) {
    std::vector<std::string> labels;
    labels.reserve(count);
    for (int i = 0; i < count; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%03d", i);
        labels.push_back("type " + std::string(buf));
    }
    return labels;
}

SynthCorpus generate_synthetic(const SynthConfig& config, uint64_t seed) {
    if (config.num_types <= 0) throw ConfigError("synthetic corpus needs at least one type");
    if (config.vocab_size < 8) throw ConfigError("synthetic vocabulary too small");
    if (config.max_sentence_len < 6) throw ConfigError("max_sentence_len must be at least 6");

    SynthCorpus out;
    std::vector<std::string> labels;
    for (int c = 0; c < config.num_types; ++c) {
        if (c < static_cast<int>(std::size(kTypeNames)))
            labels.emplace_back(kTypeNames[c]);
        else
            labels.push_back("kind" + std::to_string(c));
    }
    out.types = EntityTypeSet::make(labels, std::max(100, config.num_types));

    std::vector<std::string> fillers;
    for (int i = 0; i < config.vocab_size; ++i) fillers.push_back("w" + std::to_string(i));
    std::vector<std::string> triggers;
    for (int c = 0; c < config.num_types; ++c) triggers.push_back("trig" + std::to_string(c));
    std::vector<std::string> slots;
    for (int i = 0; i < 16; ++i) slots.push_back("s" + std::to_string(i));

    Rng rng(seed);
    std::set<std::string> seen_sentences;

    auto gen_doc = [&](std::vector<AnnotatedDocument>& dst) {
        for (int attempt = 0; attempt < 1000; ++attempt) {
            AnnotatedDocument doc;
            const int target_len = 6 + rng.uniform_int(config.max_sentence_len - 5);
            const int n_entities = 1 + rng.uniform_int(2);
            // Entity positions are carved out of the filler stream.
            std::vector<std::pair<int, int>> planned;  // (position budget marker, type)
            while (static_cast<int>(doc.tokens.size()) < target_len) {
                const bool place_entity =
                    static_cast<int>(planned.size()) < n_entities &&
                    rng.bernoulli(0.25) &&
                    static_cast<int>(doc.tokens.size()) + 4 < target_len;
                if (place_entity) {
                    const int type = rng.uniform_int(config.num_types);
                    const int width = 1 + rng.uniform_int(3);  // slot words after the trigger
                    const int start = static_cast<int>(doc.tokens.size());
                    doc.tokens.push_back(triggers[type]);
                    for (int w = 0; w < width; ++w)
                        doc.tokens.push_back(slots[rng.uniform_int(static_cast<int>(slots.size()))]);
                    doc.entities.push_back({start, start + width, out.types.labels[type]});
                    planned.emplace_back(start, type);
                    // A filler after the entity keeps patterns unambiguous:
                    // slot runs always terminate before the next word.
                    if (static_cast<int>(doc.tokens.size()) < target_len)
                        doc.tokens.push_back(fillers[rng.uniform_int(config.vocab_size)]);
                } else {
                    doc.tokens.push_back(fillers[rng.uniform_int(config.vocab_size)]);
                }
            }
            if (doc.entities.empty()) continue;
            const std::string key = joined(doc.tokens);
            if (!seen_sentences.insert(key).second) continue;  // no split leakage
            validate_document(doc);
            dst.push_back(std::move(doc));
            return;
        }
        throw DataError("synthetic generator failed to produce a fresh sentence");
    };

    for (int i = 0; i < config.train_docs; ++i) gen_doc(out.train);
    for (int i = 0; i < config.test_docs; ++i) gen_doc(out.test);
    return out;
}

}  // namespace biner
