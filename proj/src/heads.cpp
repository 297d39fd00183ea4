#include "rlab/heads.hpp"

#include <fstream>
#include <sstream>

namespace rlab {

namespace {

bool valid_dep_type(const std::string& t) { return t == "arg1" || t == "arg2" || t == "coref"; }

} // namespace

DependencyLoad load_dependencies(std::istream& in,
                                 const std::map<std::string, int>& doc_word_counts) {
    std::string line;
    if (!std::getline(in, line))
        throw DataError("dependencies: empty file");
    if (line != "doc_id\tdep_type\thead_word_index\tdependent_word_index")
        throw DataError("dependencies: unexpected header '" + line + "'");
    DependencyLoad out;
    long long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        DependencyRecord rec;
        std::string head_s, dep_s;
        if (!std::getline(ls, rec.doc_id, '\t') || !std::getline(ls, rec.dep_type, '\t') ||
            !std::getline(ls, head_s, '\t') || !std::getline(ls, dep_s))
            throw DataError("dependencies: malformed row at line " + std::to_string(line_no));
        if (!valid_dep_type(rec.dep_type))
            throw DataError("dependencies: unknown dep_type '" + rec.dep_type + "' at line " +
                            std::to_string(line_no));
        try {
            rec.head_word_index = std::stoi(head_s);
            rec.dependent_word_index = std::stoi(dep_s);
        } catch (const std::exception&) {
            throw DataError("dependencies: non-integer index at line " + std::to_string(line_no));
        }
        auto it = doc_word_counts.find(rec.doc_id);
        if (it == doc_word_counts.end())
            throw DataError("dependencies: unknown doc_id '" + rec.doc_id + "' at line " +
                            std::to_string(line_no));
        if (rec.head_word_index < 0 || rec.head_word_index >= it->second ||
            rec.dependent_word_index < 0 || rec.dependent_word_index >= it->second)
            throw DataError("dependencies: word index out of document bounds at line " +
                            std::to_string(line_no));
        // Dependents at or after the head are inaccessible to causal
        // attention; count and drop.
        if (rec.dependent_word_index >= rec.head_word_index) {
            ++out.dropped_noncausal;
            continue;
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

DependencyLoad load_dependencies_file(const std::string& path,
                                      const std::map<std::string, int>& doc_word_counts) {
    std::ifstream in(path);
    if (!in) throw DataError("dependencies: cannot read " + path);
    return load_dependencies(in, doc_word_counts);
}

HeadScoreReport analyze_heads(const ModelParams& params, const ModelConfig& config,
                              const Vocab& vocab,
                              const std::vector<std::pair<std::string, std::string>>& documents,
                              const std::vector<DependencyRecord>& deps) {
    HeadScoreReport report;
    report.n_layers = config.n_layers;
    report.n_heads = config.n_heads;

    struct Accum {
        double score_sum = 0.0;
        long long count = 0;
    };
    std::map<std::tuple<int, int, std::string>, Accum> acc;
    std::map<std::string, std::pair<double, long long>> distance; // per type

    for (const auto& [doc_id, text] : documents) {
        std::vector<const DependencyRecord*> doc_deps;
        for (const auto& rec : deps)
            if (rec.doc_id == doc_id) doc_deps.push_back(&rec);
        if (doc_deps.empty()) continue;

        TokenizedText toks = encode(vocab, text);
        if (static_cast<int>(toks.token_ids.size()) > config.max_context)
            throw DataError("head analysis: document '" + doc_id + "' has " +
                            std::to_string(toks.token_ids.size()) +
                            " tokens, exceeding the context window of " +
                            std::to_string(config.max_context));

        Tape tape;
        ForwardResult fr = forward(tape, params, config, toks.token_ids, {Mode::eval, true});

        for (const DependencyRecord* rec : doc_deps) {
            const int words = static_cast<int>(toks.words.size());
            if (rec->head_word_index >= words || rec->dependent_word_index >= words)
                throw DataError("head analysis: dependency index out of range in document '" +
                                doc_id + "'");
            const WordSpan& head_span = toks.word_spans[static_cast<size_t>(rec->head_word_index)];
            const WordSpan& dep_span =
                toks.word_spans[static_cast<size_t>(rec->dependent_word_index)];
            for (int layer = 0; layer < config.n_layers; ++layer) {
                for (int head = 0; head < config.n_heads; ++head) {
                    const Tensor& w = fr.attention[static_cast<size_t>(layer)][static_cast<size_t>(head)];
                    // Within-word token average first.
                    double sum = 0.0;
                    int pairs = 0;
                    for (int qt = head_span.start_token; qt < head_span.end_token; ++qt)
                        for (int kt = dep_span.start_token; kt < dep_span.end_token; ++kt) {
                            sum += w.at2(qt, kt);
                            ++pairs;
                        }
                    auto& cell = acc[{layer, head, rec->dep_type}];
                    cell.score_sum += sum / pairs;
                    ++cell.count;
                }
            }
            auto& dist = distance[rec->dep_type];
            dist.first += rec->head_word_index - rec->dependent_word_index;
            ++dist.second;
        }
    }

    for (const auto& [key, a] : acc) {
        HeadTypeStats stats;
        stats.count = a.count;
        stats.mean_score = a.score_sum / static_cast<double>(a.count);
        const auto& dist = distance[std::get<2>(key)];
        stats.mean_distance = dist.first / static_cast<double>(dist.second);
        report.cells[key] = stats;
    }
    return report;
}

std::map<std::string, double> mean_attention(const ModelParams& params, const ModelConfig& config,
                                             const Vocab& vocab,
                                             const std::vector<std::pair<std::string, std::string>>& documents,
                                             const std::vector<DependencyRecord>& deps, int layer,
                                             int head) {
    if (layer < 0 || layer >= config.n_layers || head < 0 || head >= config.n_heads)
        throw ContractError("mean_attention: layer/head out of range");
    HeadScoreReport report = analyze_heads(params, config, vocab, documents, deps);
    std::map<std::string, double> out;
    for (const auto& [key, stats] : report.cells)
        if (std::get<0>(key) == layer && std::get<1>(key) == head)
            out[std::get<2>(key)] = stats.mean_score;
    return out;
}

void write_head_report_csv(std::ostream& out, const HeadScoreReport& report) {
    out << "layer,head,dep_type,mean_score,count,mean_distance_words\n";
    std::ostringstream os;
    os.precision(12);
    for (const auto& [key, stats] : report.cells) {
        os.str("");
        os << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << ","
           << stats.mean_score << "," << stats.count << "," << stats.mean_distance << "\n";
        out << os.str();
    }
}

} // namespace rlab
