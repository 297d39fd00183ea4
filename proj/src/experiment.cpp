#include "rlab/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "rlab/bias.hpp"
#include "rlab/csv.hpp"
#include "rlab/heads.hpp"
#include "rlab/surprisal.hpp"
#include "rlab/svg.hpp"
#include "rlab/tokenizer.hpp"

namespace fs = std::filesystem;

namespace rlab {

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config: key '" + key + "' expects 0/1, got '" + v + "'");
}

int parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        const double out = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

} // namespace

ExperimentConfig parse_experiment_config(std::istream& in, const std::string& origin) {
    ExperimentConfig cfg;
    cfg.model.d_ff = 0;          // resolved to 4*d_model unless set
    bool rotary_explicit = false;
    bool seed_seen = false;
    uint64_t seed = 1;
    std::string slopes_value;

    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config " + origin + ":" + std::to_string(line_no) +
                              ": expected key=value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));

        if (key == "condition") cfg.condition = value;
        else if (key == "seed") { seed = std::stoull(value); seed_seen = true; }
        else if (key == "model.n_layers") cfg.model.n_layers = parse_int(value, key);
        else if (key == "model.n_heads") cfg.model.n_heads = parse_int(value, key);
        else if (key == "model.d_model") cfg.model.d_model = parse_int(value, key);
        else if (key == "model.d_ff") cfg.model.d_ff = parse_int(value, key);
        else if (key == "model.vocab_size") cfg.model.vocab_size = parse_int(value, key);
        else if (key == "model.max_context") cfg.model.max_context = parse_int(value, key);
        else if (key == "model.lowercase") cfg.lowercase = parse_bool(value, key);
        else if (key == "train.total_steps") cfg.train.total_steps = parse_int(value, key);
        else if (key == "train.batch_size") cfg.train.batch_size = parse_int(value, key);
        else if (key == "train.seq_len") cfg.train.seq_len = parse_int(value, key);
        else if (key == "train.lr_max") cfg.train.lr_max = parse_double(value, key);
        else if (key == "train.lr_min") cfg.train.lr_min = parse_double(value, key);
        else if (key == "train.warmup_fraction") cfg.train.warmup_fraction = parse_double(value, key);
        else if (key == "train.beta1") cfg.train.beta1 = parse_double(value, key);
        else if (key == "train.beta2") cfg.train.beta2 = parse_double(value, key);
        else if (key == "train.eps") cfg.train.eps = parse_double(value, key);
        else if (key == "bias.kind") cfg.model.bias.kind = bias_kind_from_string(value);
        else if (key == "bias.phase") cfg.model.bias.phase = bias_phase_from_string(value);
        else if (key == "bias.slopes") slopes_value = value;
        else if (key == "bias.lambda") cfg.model.bias.lambda = parse_double(value, key);
        else if (key == "bias.alpha") cfg.model.bias.alpha = parse_double(value, key);
        else if (key == "bias.use_rotary") {
            cfg.model.bias.use_rotary = parse_bool(value, key);
            rotary_explicit = true;
        }
        else if (key == "paths.train_corpus") cfg.train_corpus = value;
        else if (key == "paths.eval_corpus") cfg.eval_corpus = value;
        else if (key == "paths.rt_corpora") cfg.rt_corpora = split_list(value, ';');
        else if (key == "paths.dependency_file") cfg.dependency_file = value;
        else if (key == "paths.out_dir") cfg.out_dir = value;
        else throw ConfigError("config " + origin + ":" + std::to_string(line_no) +
                               ": unknown key '" + key + "'");
    }

    if (cfg.model.d_ff == 0) cfg.model.d_ff = 4 * cfg.model.d_model;
    if (seed_seen) {
        cfg.model.seed = seed;
        cfg.train.seed = seed;
    }

    // bias.slopes accepts "mix" (the 2^(-8h/H) schedule), "uniform:<m>",
    // or an explicit comma list.
    if (!slopes_value.empty()) {
        if (slopes_value == "mix") {
            cfg.model.bias.slopes = alibi_slopes(cfg.model.n_heads);
        } else if (slopes_value.rfind("uniform:", 0) == 0) {
            cfg.model.bias.slopes = uniform_slopes(
                cfg.model.n_heads, parse_double(slopes_value.substr(8), "bias.slopes"));
        } else {
            for (const auto& item : split_list(slopes_value, ','))
                cfg.model.bias.slopes.push_back(parse_double(item, "bias.slopes"));
        }
    } else if (cfg.model.bias.kind == BiasKind::alibi) {
        cfg.model.bias.slopes = alibi_slopes(cfg.model.n_heads);
    }

    // Rotary default: removed only when a bias is
    // present during training.
    if (!rotary_explicit)
        cfg.model.bias.use_rotary = !(cfg.model.bias.kind != BiasKind::none &&
                                      cfg.model.bias.phase == BiasPhase::train_and_inference);
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path);
    return parse_experiment_config(in, path);
}

void ExperimentConfig::validate_for(const std::string& command) const {
    if (condition.empty() || condition.find_first_of("/\\ \t") != std::string::npos)
        throw ConfigError("config: condition name '" + condition + "' must be a plain file-safe token");
    model.validate();
    train.validate();
    if (out_dir.empty()) throw ConfigError("config: paths.out_dir is required");

    auto need_path = [&](const std::string& p, const std::string& key) {
        if (p.empty()) throw ConfigError("config: " + key + " is required for '" + command + "'");
        if (!fs::exists(p)) throw DataError("config: " + key + " path does not exist: " + p);
    };
    if (command == "train") need_path(train_corpus, "paths.train_corpus");
    if (command == "surprisal" || command == "heads") need_path(eval_corpus, "paths.eval_corpus");
    if (command == "heads") need_path(dependency_file, "paths.dependency_file");
    if (command == "regress") {
        need_path(train_corpus, "paths.train_corpus");
        if (rt_corpora.empty())
            throw ConfigError("config: paths.rt_corpora is required for 'regress'");
        for (const auto& p : rt_corpora)
            if (!fs::exists(p)) throw DataError("config: rt corpus path does not exist: " + p);
    }
}

std::vector<std::pair<std::string, std::string>> read_eval_docs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("eval corpus: cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("eval corpus: empty file " + path);
    if (trim(line) != "doc_id\ttext")
        throw DataError("eval corpus: expected header 'doc_id<TAB>text' in " + path);
    std::vector<std::pair<std::string, std::string>> docs;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw DataError("eval corpus: missing tab at " + path + ":" + std::to_string(line_no));
        docs.emplace_back(trim(line.substr(0, tab)), line.substr(tab + 1));
    }
    if (docs.empty()) throw DataError("eval corpus: no documents in " + path);
    return docs;
}

ConditionPaths condition_paths(const ExperimentConfig& config) {
    ConditionPaths p;
    p.dir = config.out_dir + "/" + config.condition;
    p.checkpoint = p.dir + "/checkpoint.bin";
    p.train_state = p.dir + "/train_state.bin";
    p.vocab = p.dir + "/vocab.txt";
    p.loss_log = p.dir + "/loss.csv";
    p.manifest = p.dir + "/manifest.txt";
    p.surprisal_csv = p.dir + "/surprisal.csv";
    p.head_report_csv = p.dir + "/head_report.csv";
    return p;
}

std::string file_checksum_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checksum: cannot read " + path);
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in.read(buf, sizeof buf) || in.gcount() > 0)
        h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

namespace {

std::string read_text_file(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(what + ": cannot read " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
    if (!out) throw DataError("write failed for " + path);
}

void echo_config(std::ostream& out, const ExperimentConfig& cfg) {
    out << "condition=" << cfg.condition << "\n";
    out << "seed=" << cfg.model.seed << "\n";
    out << "model.n_layers=" << cfg.model.n_layers << "\n";
    out << "model.n_heads=" << cfg.model.n_heads << "\n";
    out << "model.d_model=" << cfg.model.d_model << "\n";
    out << "model.d_ff=" << cfg.model.d_ff << "\n";
    out << "model.vocab_size=" << cfg.model.vocab_size << "\n";
    out << "model.max_context=" << cfg.model.max_context << "\n";
    out << "model.lowercase=" << (cfg.lowercase ? 1 : 0) << "\n";
    out << "bias.kind=" << to_string(cfg.model.bias.kind) << "\n";
    out << "bias.phase=" << to_string(cfg.model.bias.phase) << "\n";
    std::ostringstream nums;
    nums.precision(17);
    nums << "bias.lambda=" << cfg.model.bias.lambda << "\nbias.alpha=" << cfg.model.bias.alpha
         << "\n";
    nums << "bias.slopes=";
    for (size_t i = 0; i < cfg.model.bias.slopes.size(); ++i)
        nums << (i ? "," : "") << cfg.model.bias.slopes[i];
    nums << "\n";
    out << nums.str();
    out << "bias.use_rotary=" << (cfg.model.bias.use_rotary ? 1 : 0) << "\n";
    out << "train.total_steps=" << cfg.train.total_steps << "\n";
    out << "train.batch_size=" << cfg.train.batch_size << "\n";
    out << "train.seq_len=" << cfg.train.seq_len << "\n";
    std::ostringstream tnums;
    tnums.precision(17);
    tnums << "train.lr_max=" << cfg.train.lr_max << "\ntrain.lr_min=" << cfg.train.lr_min
          << "\ntrain.warmup_fraction=" << cfg.train.warmup_fraction << "\n";
    out << tnums.str();
}

} // namespace

void cmd_train(const ExperimentConfig& config) {
    config.validate_for("train");
    const ConditionPaths paths = condition_paths(config);
    fs::create_directories(paths.dir);

    const std::string corpus_text = read_text_file(config.train_corpus, "train corpus");
    Vocab vocab = Vocab::build_from_string(corpus_text, config.model.vocab_size, config.lowercase);
    ModelConfig model_config = config.model;
    model_config.vocab_size = vocab.size(); // actual size may be smaller
    vocab.save_file(paths.vocab);

    TokenizedText stream = encode(vocab, corpus_text);
    ModelParams params = ModelParams::init(model_config);
    Trainer trainer(params, model_config, config.train);
    const std::vector<StepLog> log = trainer.run(stream.token_ids);

    save_checkpoint_file(paths.checkpoint, params, model_config);
    {
        std::ofstream out(paths.loss_log, std::ios::binary);
        if (!out) throw DataError("cannot write " + paths.loss_log);
        write_loss_log(out, log);
    }

    std::ostringstream manifest;
    echo_config(manifest, config);
    manifest << "tokens_in_corpus=" << stream.token_ids.size() - 1 << "\n";
    manifest << "actual_vocab_size=" << vocab.size() << "\n";
    manifest << "checksum.checkpoint=" << file_checksum_hex(paths.checkpoint) << "\n";
    manifest << "checksum.vocab=" << file_checksum_hex(paths.vocab) << "\n";
    manifest << "checksum.loss_log=" << file_checksum_hex(paths.loss_log) << "\n";
    write_text_file(paths.manifest, manifest.str());
}

void cmd_surprisal(const ExperimentConfig& config) {
    config.validate_for("surprisal");
    const ConditionPaths paths = condition_paths(config);
    if (!fs::exists(paths.checkpoint))
        throw DataError("surprisal: checkpoint not found, run train first: " + paths.checkpoint);
    auto [params, model_config] = load_checkpoint_file(paths.checkpoint);
    Vocab vocab = Vocab::load_file(paths.vocab);

    const auto docs = read_eval_docs(config.eval_corpus);
    std::ostringstream out;
    out.precision(17);
    out << "doc_id,word_index,word,surprisal_bits,n_tokens,model_id\n";
    for (const auto& [doc_id, text] : docs) {
        for (const SurprisalRecord& rec : word_surprisals(params, model_config, vocab, text)) {
            std::ostringstream row;
            row.precision(17);
            row << rec.surprisal_bits;
            write_csv_row(out, {doc_id, std::to_string(rec.word_index), rec.word, row.str(),
                                std::to_string(rec.n_tokens), config.condition});
        }
    }
    write_text_file(paths.surprisal_csv, out.str());
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

namespace {

struct SurprisalLookup {
    // (doc_id, word_index) -> (word, bits)
    std::map<std::pair<std::string, int>, std::pair<std::string, double>> by_pos;
};

SurprisalLookup load_surprisal_csv(const std::string& path) {
    CsvTable t = read_csv_file(path);
    const int c_doc = t.require_column("doc_id", path);
    const int c_idx = t.require_column("word_index", path);
    const int c_word = t.require_column("word", path);
    const int c_bits = t.require_column("surprisal_bits", path);
    SurprisalLookup lookup;
    for (const auto& row : t.rows) {
        const std::string& doc = row[static_cast<size_t>(c_doc)];
        const int idx = std::stoi(row[static_cast<size_t>(c_idx)]);
        lookup.by_pos[{doc, idx}] = {row[static_cast<size_t>(c_word)],
                                     std::stod(row[static_cast<size_t>(c_bits)])};
    }
    return lookup;
}

std::vector<Observation> load_rt_csv(const std::string& path) {
    CsvTable t = read_csv_file(path);
    const int c_corpus = t.require_column("corpus", path);
    const int c_measure = t.require_column("measure", path);
    const int c_subject = t.require_column("subject", path);
    const int c_sentence = t.require_column("sentence", path);
    const int c_doc = t.require_column("doc_id", path);
    const int c_idx = t.require_column("word_index", path);
    const int c_word = t.require_column("word", path);
    const int c_rt = t.require_column("rt_ms", path);
    const int c_fix = t.column("prev_fixated");
    const int c_line = t.column("line_pos");
    const int c_screen = t.column("screen_pos");

    std::vector<Observation> rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        Observation o;
        o.corpus = r[static_cast<size_t>(c_corpus)];
        o.measure = measure_from_string(r[static_cast<size_t>(c_measure)]);
        o.subject = std::stoi(r[static_cast<size_t>(c_subject)]);
        o.sentence = std::stoi(r[static_cast<size_t>(c_sentence)]);
        o.doc_id = r[static_cast<size_t>(c_doc)];
        o.word_index = std::stoi(r[static_cast<size_t>(c_idx)]);
        o.word = r[static_cast<size_t>(c_word)];
        o.rt_ms = std::stod(r[static_cast<size_t>(c_rt)]);
        if (c_fix >= 0 && !r[static_cast<size_t>(c_fix)].empty())
            o.prev_fixated = r[static_cast<size_t>(c_fix)] == "1";
        if (c_line >= 0 && !r[static_cast<size_t>(c_line)].empty())
            o.line_pos = std::stoi(r[static_cast<size_t>(c_line)]);
        if (c_screen >= 0 && !r[static_cast<size_t>(c_screen)].empty())
            o.screen_pos = std::stoi(r[static_cast<size_t>(c_screen)]);
        rows.push_back(std::move(o));
    }
    if (rows.empty()) throw DataError("rt corpus: no rows in " + path);
    return rows;
}

void join_predictors(std::vector<Observation>& rows, const SurprisalLookup& lookup,
                     const UnigramModel& unigram, bool lowercase, const std::string& corpus_path) {
    for (Observation& row : rows) {
        auto it = lookup.by_pos.find({row.doc_id, row.word_index});
        if (it == lookup.by_pos.end())
            throw DataError("regress: no surprisal for (" + row.doc_id + ", " +
                            std::to_string(row.word_index) + ") needed by " + corpus_path);
        std::string expect = row.word;
        if (lowercase)
            for (char& c : expect) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (it->second.first != expect)
            throw DataError("regress: word mismatch at (" + row.doc_id + ", " +
                            std::to_string(row.word_index) + "): rt corpus has '" + row.word +
                            "', surprisal has '" + it->second.first + "'");
        row.surprisal_bits = it->second.second;
        // Spillover depth 1: the true previous word, before any filtering.
        auto prev = lookup.by_pos.find({row.doc_id, row.word_index - 1});
        row.prev_surprisal_bits = prev == lookup.by_pos.end() ? 0.0 : prev->second.second;
        row.unigram_bits = unigram.surprisal_bits(row.word);
    }
}

struct GroupKey {
    std::string corpus;
    Measure measure;
    bool operator<(const GroupKey& o) const {
        return std::tie(corpus, measure) < std::tie(o.corpus, o.measure);
    }
};

std::map<GroupKey, std::vector<Observation>> group_rows(std::vector<Observation> rows) {
    std::map<GroupKey, std::vector<Observation>> groups;
    for (auto& row : rows) groups[{row.corpus, row.measure}].push_back(std::move(row));
    return groups;
}

std::string format_double(double v, int precision = 12) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

} // namespace

void cmd_regress(const std::vector<ExperimentConfig>& conditions) {
    if (conditions.empty()) throw ConfigError("regress: no conditions given");
    for (const auto& c : conditions) c.validate_for("regress");
    const ExperimentConfig& lead = conditions.front();

    // The reference condition for the permutation comparison.
    size_t ref_index = 0;
    for (size_t i = 0; i < conditions.size(); ++i)
        if (conditions[i].model.bias.kind == BiasKind::none) {
            ref_index = i;
            break;
        }

    const UnigramModel unigram = UnigramModel::build_from_string(
        read_text_file(lead.train_corpus, "train corpus"), lead.lowercase);

    // Raw rt rows, shared across conditions.
    std::vector<Observation> raw;
    for (const auto& path : lead.rt_corpora) {
        auto rows = load_rt_csv(path);
        raw.insert(raw.end(), rows.begin(), rows.end());
    }

    struct ConditionResult {
        std::map<GroupKey, double> dll;
        std::map<GroupKey, PairedErrors> heldout; // full-model squared errors
        double total = 0.0;
    };
    std::vector<ConditionResult> results(conditions.size());
    std::set<GroupKey> all_groups;

    for (size_t ci = 0; ci < conditions.size(); ++ci) {
        const auto paths = condition_paths(conditions[ci]);
        if (!fs::exists(paths.surprisal_csv))
            throw DataError("regress: surprisal CSV missing for condition '" +
                            conditions[ci].condition + "', run surprisal first");
        const SurprisalLookup lookup = load_surprisal_csv(paths.surprisal_csv);
        std::vector<Observation> rows = raw;
        join_predictors(rows, lookup, unigram, conditions[ci].lowercase, "rt corpora");
        prepare_observations(rows);
        auto groups = group_rows(std::move(rows));
        for (auto& [key, group_rows_vec] : groups) {
            FilterReport report;
            const auto filtered = is_eye_tracking(key.measure)
                                      ? filter_et(group_rows_vec, &report)
                                      : filter_spr(group_rows_vec, &report);
            const DeltaLogLik dll = delta_loglik(filtered, key.measure);
            results[ci].dll[key] = dll.value;
            results[ci].total += dll.value;
            results[ci].heldout[key] = heldout_squared_errors(filtered, key.measure);
            all_groups.insert(key);
        }
    }

    // Permutation p: reference full-model errors vs condition full-model
    // errors, concatenated across groups, paired by observation.
    std::vector<double> p_values(conditions.size(), 1.0);
    for (size_t ci = 0; ci < conditions.size(); ++ci) {
        if (ci == ref_index) continue;
        std::vector<double> ref_errors, cond_errors;
        for (const auto& key : all_groups) {
            const auto& re = results[ref_index].heldout.at(key).full;
            const auto& ce = results[ci].heldout.at(key).full;
            ref_errors.insert(ref_errors.end(), re.begin(), re.end());
            cond_errors.insert(cond_errors.end(), ce.begin(), ce.end());
        }
        p_values[ci] = permutation_test(ref_errors, cond_errors, 1000, lead.model.seed);
    }

    std::ostringstream out;
    std::vector<std::string> header{"condition"};
    for (const auto& key : all_groups)
        header.push_back(key.corpus + "_" + to_string(key.measure));
    header.push_back("total");
    header.push_back("perm_p_vs_" + conditions[ref_index].condition);
    write_csv_row(out, header);
    for (size_t ci = 0; ci < conditions.size(); ++ci) {
        std::vector<std::string> row{conditions[ci].condition};
        for (const auto& key : all_groups) {
            auto it = results[ci].dll.find(key);
            row.push_back(it == results[ci].dll.end() ? "" : format_double(it->second));
        }
        row.push_back(format_double(results[ci].total));
        row.push_back(ci == ref_index ? "" : format_double(p_values[ci], 6));
        write_csv_row(out, row);
    }
    write_text_file(lead.out_dir + "/delta_loglik.csv", out.str());
}

void cmd_heads(const ExperimentConfig& config) {
    config.validate_for("heads");
    const ConditionPaths paths = condition_paths(config);
    if (!fs::exists(paths.checkpoint))
        throw DataError("heads: checkpoint not found, run train first: " + paths.checkpoint);
    auto [params, model_config] = load_checkpoint_file(paths.checkpoint);
    Vocab vocab = Vocab::load_file(paths.vocab);

    const auto docs = read_eval_docs(config.eval_corpus);
    std::map<std::string, int> word_counts;
    for (const auto& [doc_id, text] : docs)
        word_counts[doc_id] = static_cast<int>(split_words(text, config.lowercase).size());
    const DependencyLoad deps = load_dependencies_file(config.dependency_file, word_counts);

    const HeadScoreReport report = analyze_heads(params, model_config, vocab, docs, deps.records);
    {
        std::ostringstream out;
        write_head_report_csv(out, report);
        out << "# dropped_noncausal=" << deps.dropped_noncausal << "\n";
        write_text_file(paths.head_report_csv, out.str());
    }

    // One bar chart per dependency type.
    std::set<std::string> types;
    for (const auto& [key, stats] : report.cells) types.insert(std::get<2>(key));
    for (const auto& type : types) {
        std::vector<BarGroup> bars;
        for (int layer = 0; layer < report.n_layers; ++layer)
            for (int head = 0; head < report.n_heads; ++head) {
                auto it = report.cells.find({layer, head, type});
                if (it == report.cells.end()) continue;
                BarGroup bar;
                bar.label = "L" + std::to_string(layer) + "H" + std::to_string(head);
                if (config.model.bias.kind == BiasKind::alibi &&
                    head < static_cast<int>(config.model.bias.slopes.size()))
                    bar.label += " m=" + format_double(config.model.bias.slopes[static_cast<size_t>(head)], 4);
                bar.value = it->second.mean_score;
                bars.push_back(std::move(bar));
            }
        write_text_file(paths.dir + "/heads_" + type + ".svg",
                        svg_bar_chart("Mean attention score: " + type, "mean attention score", bars));
    }
}

void cmd_report(const std::vector<ExperimentConfig>& conditions) {
    if (conditions.empty()) throw ConfigError("report: no conditions given");
    const std::string run_dir = conditions.front().out_dir;
    const std::string dll_path = run_dir + "/delta_loglik.csv";
    if (!fs::exists(dll_path))
        throw DataError("report: " + dll_path + " missing, run regress first");
    CsvTable dll = read_csv_file(dll_path);
    const int c_cond = dll.require_column("condition", dll_path);
    const int c_total = dll.require_column("total", dll_path);
    std::map<std::string, double> totals;
    for (const auto& row : dll.rows)
        totals[row[static_cast<size_t>(c_cond)]] = std::stod(row[static_cast<size_t>(c_total)]);

    std::ostringstream summary;
    summary << "condition,perplexity,delta_loglik_total\n";
    std::vector<BarGroup> bars;
    std::vector<ScatterPoint> points;
    for (const auto& cfg : conditions) {
        const auto paths = condition_paths(cfg);
        if (!fs::exists(paths.surprisal_csv))
            throw DataError("report: surprisal CSV missing for condition '" + cfg.condition + "'");
        // Perplexity from the scored corpus: word surprisal is the
        // chain-rule sum over tokens, so 2^(total bits / total tokens)
        // equals exp(mean token NLL).
        CsvTable sc = read_csv_file(paths.surprisal_csv);
        const int c_bits = sc.require_column("surprisal_bits", paths.surprisal_csv);
        const int c_ntok = sc.require_column("n_tokens", paths.surprisal_csv);
        double bits = 0.0;
        long long tokens = 0;
        for (const auto& row : sc.rows) {
            bits += std::stod(row[static_cast<size_t>(c_bits)]);
            tokens += std::stoll(row[static_cast<size_t>(c_ntok)]);
        }
        if (tokens == 0) throw DataError("report: empty surprisal CSV for '" + cfg.condition + "'");
        const double ppl = std::exp2(bits / static_cast<double>(tokens));
        auto it = totals.find(cfg.condition);
        if (it == totals.end())
            throw DataError("report: condition '" + cfg.condition + "' absent from " + dll_path);
        write_csv_row(summary, {cfg.condition, format_double(ppl), format_double(it->second)});
        bars.push_back({cfg.condition, it->second});
        points.push_back({ppl, it->second, cfg.condition});
    }
    write_text_file(run_dir + "/summary.csv", summary.str());
    write_text_file(run_dir + "/dll_totals.svg",
                    svg_bar_chart("Delta log-likelihood by condition", "delta log-likelihood", bars));
    write_text_file(run_dir + "/ppl_vs_dll.svg",
                    svg_scatter("Perplexity vs delta log-likelihood", "perplexity",
                                "delta log-likelihood", points));
}

} // namespace rlab
