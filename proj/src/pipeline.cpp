#include "loadgan/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "loadgan/metrics.hpp"
#include "loadgan/rng.hpp"

namespace loadgan::pipeline {

using json_util::ConfigError;
using json_util::json;
using json_util::ordered;
using json_util::Reader;
namespace fs = std::filesystem;

namespace {

// ---- section readers ----

codec::EncodingLevels levels_from_json(const json& j, const std::string& where) {
    Reader r(j, where);
    codec::EncodingLevels l;
    r.get("l3", l.l3);
    r.get("t_max", l.t_max);
    r.get("per_sample_max", l.per_sample_max);
    r.finish();
    l.validate();
    return l;
}

ordered to_json(const codec::EncodingLevels& l) {
    return {{"l3", l.l3}, {"t_max", l.t_max}, {"per_sample_max", l.per_sample_max}};
}

void read_corpus(Reader& r, dataio::CorpusSpec& s) {
    r.get("groups", s.groups);
    r.get("households", s.households);
    r.get("weeks", s.weeks);
    r.get("pool_meters", s.pool_meters);
    r.get("cadence", s.cadence);
    r.get("start", s.start);
    r.get("base_min", s.base_min);
    r.get("base_max", s.base_max);
    r.get("pool_base_min", s.pool_base_min);
    r.get("pool_base_max", s.pool_base_max);
    r.get("beta_min", s.beta_min);
    r.get("beta_max", s.beta_max);
    r.get("noise", s.noise);
    r.get("spike_rate", s.spike_rate);
    r.get("spike_min", s.spike_min);
    r.get("spike_max", s.spike_max);
    r.get("missing_rate", s.missing_rate);
}

ordered to_json(const dataio::CorpusSpec& s) {
    ordered j;
    j["groups"] = s.groups;
    j["households"] = s.households;
    j["weeks"] = s.weeks;
    j["pool_meters"] = s.pool_meters;
    j["cadence"] = s.cadence;
    j["start"] = s.start;
    j["base_min"] = s.base_min;
    j["base_max"] = s.base_max;
    j["pool_base_min"] = s.pool_base_min;
    j["pool_base_max"] = s.pool_base_max;
    j["beta_min"] = s.beta_min;
    j["beta_max"] = s.beta_max;
    j["noise"] = s.noise;
    j["spike_rate"] = s.spike_rate;
    j["spike_min"] = s.spike_min;
    j["spike_max"] = s.spike_max;
    j["missing_rate"] = s.missing_rate;
    return j;
}

void read_window(Reader& r, dataio::WindowOptions& w) {
    r.get("steps", w.steps);
    r.get("households", w.households);
    r.get("downsample", w.downsample);
    r.get("week_day", w.week_day);
    r.get("stride_minutes", w.stride_minutes);
}

ordered to_json(const dataio::WindowOptions& w) {
    return {{"steps", w.steps}, {"households", w.households}, {"downsample", w.downsample},
            {"week_day", w.week_day}, {"stride_minutes", w.stride_minutes}};
}

void read_data(const json& j, DataConfig& d, const std::string& where) {
    Reader r(j, where);
    r.get("source", d.source);
    if (const json* s = r.child("synth")) {
        Reader sr(*s, where + ".synth");
        read_corpus(sr, d.synth);
        sr.finish();
    }
    if (const json* w = r.child("window")) {
        Reader wr(*w, where + ".window");
        read_window(wr, d.window);
        wr.finish();
    }
    r.get("meters", d.meters);
    r.get("temperature", d.temperature);
    r.get("assignment", d.assignment);
    r.get("max_gap", d.max_gap);
    r.finish();
    if (d.source != "synth" && d.source != "files") throw ConfigError(where + ".source: expected synth or files");
    d.synth.validate();
}

ordered to_json(const DataConfig& d) {
    ordered j;
    j["source"] = d.source;
    j["synth"] = to_json(d.synth);
    j["window"] = to_json(d.window);
    j["meters"] = d.meters;
    j["temperature"] = d.temperature;
    j["assignment"] = d.assignment;
    j["max_gap"] = d.max_gap;
    return j;
}

stats::IndexConfig indices_from_json(const json& j, const std::string& where) {
    Reader r(j, where);
    stats::IndexConfig c;
    if (const json* p = r.child("periods")) {
        c.periods.clear();
        for (const auto& e : *p) {
            if (!e.is_array() || e.size() != 2) throw ConfigError(where + ".periods: expected [from_hour, to_hour] pairs");
            c.periods.push_back({e[0].get<double>(), e[1].get<double>()});
        }
    }
    r.get("day_classes", c.day_classes);
    r.get("day_class_names", c.day_class_names);
    r.finish();
    c.validate();
    return c;
}

ordered to_json(const stats::IndexConfig& c) {
    ordered j;
    auto& p = j["periods"] = ordered::array();
    for (const auto& e : c.periods) p.push_back({e.from_hour, e.to_hour});
    j["day_classes"] = c.day_classes;
    j["day_class_names"] = c.day_class_names;
    return j;
}

void read_eval(const json& j, EvalConfig& e, const std::string& where) {
    Reader r(j, where);
    r.get("count", e.count);
    if (const json* i = r.child("indices")) e.indices = indices_from_json(*i, where + ".indices");
    r.get("plots", e.plots);
    r.get("real", e.real);
    r.get("multi", e.multi);
    r.get("single", e.single);
    r.finish();
}

ordered to_json(const EvalConfig& e) {
    ordered j;
    j["count"] = e.count;
    j["indices"] = to_json(e.indices);
    j["plots"] = e.plots;
    j["real"] = e.real;
    j["multi"] = e.multi;
    j["single"] = e.single;
    return j;
}

void read_nsg(const json& j, NsgConfig& n, const std::string& where) {
    json rest = j;
    if (!rest.is_object()) throw ConfigError(where + ": expected an object");
    if (rest.contains("method")) {
        n.method = rest.at("method").get<std::string>();
        rest.erase("method");
    }
    if (n.method != "nsg" && n.method != "random") throw ConfigError(where + ".method: expected nsg or random");
    n.criteria = nsg::criteria_from_json(rest, where);
}

ordered to_json(const NsgConfig& n) {
    ordered j = nsg::to_json(n.criteria);
    j["method"] = n.method;
    return j;
}

// Module seeds always follow the global seed; an explicit value must agree.
template <class T>
void check_seed(const json& section, const T& value, const std::string& where) {
    if (section.is_object() && section.contains("seed") && section.at("seed").get<std::uint64_t>() != value) {
        throw ConfigError(where + ".seed: module seeds are derived from the global seed (expected " +
                          std::to_string(value) + ")");
    }
}

json with_defaults(json section, std::initializer_list<std::pair<const char*, json>> defaults) {
    if (section.is_null()) section = json::object();
    for (const auto& [k, v] : defaults)
        if (!section.contains(k)) section[k] = v;
    return section;
}

void derive_seeds(RunConfig& c) {
    c.multi.seed = derive_seed(c.seed, "gan_multi");
    c.single.seed = derive_seed(c.seed, "gan_single");
    c.classifier.seed = derive_seed(c.seed, "classifier");
    c.ada.seed = derive_seed(c.seed, "ada");
}

}  // namespace

RunConfig default_config(const std::string& preset, std::uint64_t seed) {
    if (preset != "desk" && preset != "paper") throw ConfigError("preset: expected desk or paper, got '" + preset + "'");
    RunConfig c;
    c.preset = preset;
    c.seed = seed;
    const bool paper = preset == "paper";
    if (paper) {
        c.data.window.steps = 672;
        c.data.window.households = 8;
        c.data.window.downsample = 1;
        c.data.synth.households = 8;
        c.multi = gan::paper_preset(gan::ModelMode::multi);
        c.single = gan::paper_preset(gan::ModelMode::single);
        c.classifier = dlc::paper_classifier();
    } else {
        c.multi = gan::desk_preset(gan::ModelMode::multi);
        c.single = gan::desk_preset(gan::ModelMode::single);
        c.classifier = dlc::desk_classifier();
    }
    derive_seeds(c);
    return c;
}

RunConfig config_from_json(const json& j, const std::optional<std::string>& preset_override,
                           const std::optional<std::uint64_t>& seed_override) {
    Reader r(j, "config");
    std::string preset = "desk";
    std::uint64_t seed = 0;
    r.get("preset", preset);
    r.get("seed", seed);
    if (preset_override) preset = *preset_override;
    if (seed_override) seed = *seed_override;
    RunConfig c = default_config(preset, seed);

    if (const json* s = r.child("codec")) c.codec = levels_from_json(*s, "config.codec");
    if (const json* s = r.child("data")) read_data(*s, c.data, "config.data");
    const std::size_t m = c.data.window.steps, n = c.data.window.households;
    if (c.data.synth.households != n) {
        throw ConfigError("config.data: synth.households (" + std::to_string(c.data.synth.households) +
                          ") must equal window.households (" + std::to_string(n) + ")");
    }

    auto shaped = [&](const json* s, const char* mode) {
        json out = with_defaults(s ? *s : json::object(), {{"preset", preset}, {"steps", m}, {"households", n}});
        if (mode) out = with_defaults(out, {{"mode", mode}});
        out.erase("seed");
        return out;
    };
    const json* gm = r.child("gan_multi");
    const json* gs = r.child("gan_single");
    const json* cl = r.child("classifier");
    c.multi = gan::gan_config_from_json(shaped(gm, "multi"), "config.gan_multi");
    c.single = gan::gan_config_from_json(shaped(gs, "single"), "config.gan_single");
    if (c.multi.mode != gan::ModelMode::multi) throw ConfigError("config.gan_multi.mode must be multi");
    if (c.single.mode != gan::ModelMode::single) throw ConfigError("config.gan_single.mode must be single");
    c.classifier = dlc::classifier_config_from_json(shaped(cl, nullptr), "config.classifier");
    for (const auto* g : {&c.multi, &c.single}) {
        if (g->steps != m || g->households != n) throw ConfigError("config: GAN shape differs from data.window");
    }
    if (c.classifier.steps != m || c.classifier.households != n) {
        throw ConfigError("config.classifier: shape differs from data.window");
    }
    if (const json* s = r.child("nsg")) read_nsg(*s, c.nsg, "config.nsg");
    json ada_section = json::object();
    if (const json* s = r.child("ada")) {
        ada_section = *s;
        if (ada_section.is_object()) ada_section.erase("seed");
    }
    c.ada = ada::ada_config_from_json(ada_section, "config.ada");
    if (const json* s = r.child("evaluate")) read_eval(*s, c.evaluate, "config.evaluate");
    r.finish();

    derive_seeds(c);
    if (seed_override) return c;  // a new global seed re-derives every module seed
    if (gm) check_seed(*gm, c.multi.seed, "config.gan_multi");
    if (gs) check_seed(*gs, c.single.seed, "config.gan_single");
    if (cl) check_seed(*cl, c.classifier.seed, "config.classifier");
    if (const json* s = j.contains("ada") ? &j.at("ada") : nullptr) check_seed(*s, c.ada.seed, "config.ada");
    return c;
}

ordered to_json(const RunConfig& c) {
    ordered j;
    j["preset"] = c.preset;
    j["seed"] = c.seed;
    j["codec"] = to_json(c.codec);
    j["data"] = to_json(c.data);
    j["nsg"] = to_json(c.nsg);
    j["classifier"] = dlc::to_json(c.classifier);
    j["gan_multi"] = gan::to_json(c.multi);
    j["gan_single"] = gan::to_json(c.single);
    j["ada"] = ada::to_json(c.ada);
    j["evaluate"] = to_json(c.evaluate);
    return j;
}

RunConfig load_config(const fs::path& path, const std::optional<std::string>& preset,
                      const std::optional<std::uint64_t>& seed) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j, preset, seed);
}

// ---------------------------------------------------------------------------
// commands

namespace {

void say(const Log& log, const std::string& s) {
    if (log) log(s);
}

void write_json(const fs::path& path, const ordered& j) {
    fs::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

// Replaces a stage directory so reruns never see stale files.
fs::path fresh(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SampleSet need_set(const fs::path& dir, const std::string& what) {
    if (!fs::exists(dir / "manifest.json")) {
        throw std::runtime_error(what + " not found at " + dir.string() + " (run the producing command first)");
    }
    return load_sample_set(dir);
}

void write_assignment(const fs::path& path, const dataio::Assignment& a) {
    ordered j = ordered::object();
    for (const auto& [gid, ids] : a) j[gid] = ids;
    write_json(path, j);
}

dataio::Assignment read_assignment(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read assignment " + path.string());
    const json j = json::parse(is);
    dataio::Assignment a;
    for (auto it = j.begin(); it != j.end(); ++it) a[it.key()] = it.value().get<std::vector<std::string>>();
    return a;
}

ordered window_report_json(const dataio::WindowReport& w) {
    return {{"candidates", w.candidates}, {"complete", w.complete}, {"excluded", w.excluded}};
}

void cmd_synth(const RunConfig& c, const fs::path& out, const Log& log) {
    const fs::path dir = fresh(out / "data");
    dataio::WindowReport wrep, prep;
    const auto corpus = dataio::synth_corpus(c.data.synth, derive_seed(c.seed, "synth"), c.data.window, &wrep);
    dataio::write_meters_csv(dir / "meters.csv", corpus.meters);
    dataio::write_temperature_csv(dir / "temperature.csv", corpus.temperature);
    write_assignment(dir / "assignment.json", corpus.assignment);
    const auto pool = dataio::profile_pool(corpus.meters, corpus.temperature, c.data.window, &prep);
    save_sample_set(paths::positives(out), corpus.positives);
    save_sample_set(paths::pool(out), pool);
    write_json(dir / "summary.json", {{"positives", corpus.positives.size()},
                                      {"pool_profiles", pool.size()},
                                      {"meters", corpus.meters.size()},
                                      {"groups", window_report_json(wrep)},
                                      {"pool", window_report_json(prep)}});
    say(log, "synth-data: " + std::to_string(corpus.positives.size()) + " positive groups, " +
                 std::to_string(pool.size()) + " pool profiles");
}

void cmd_ingest(const RunConfig& c, const fs::path& out, const Log& log) {
    if (c.data.meters.empty() || c.data.temperature.empty() || c.data.assignment.empty()) {
        throw ConfigError("ingest: data.meters, data.temperature and data.assignment are required");
    }
    dataio::IngestReport irep;
    dataio::TemperatureReport trep;
    const std::int64_t cadence = c.data.synth.cadence;
    const auto meters = dataio::ingest_meters(c.data.meters, cadence, &irep);
    const auto temperature = dataio::ingest_temperature(c.data.temperature, cadence, c.data.max_gap, &trep);
    const auto assignment = read_assignment(c.data.assignment);
    const fs::path dir = fresh(out / "data");
    dataio::WindowReport wrep, prep;
    const auto positives = dataio::window_groups(meters, assignment, temperature, c.data.window, &wrep);
    const auto pool = dataio::profile_pool(meters, temperature, c.data.window, &prep);
    save_sample_set(paths::positives(out), positives);
    save_sample_set(paths::pool(out), pool);
    write_json(dir / "summary.json",
               {{"positives", positives.size()},
                {"pool_profiles", pool.size()},
                {"meters", meters.size()},
                {"ingest", {{"rows", irep.rows}, {"gaps", irep.gaps}, {"off_cadence", irep.off_cadence}}},
                {"temperature",
                 {{"source_cadence", trep.source_cadence}, {"interpolated", trep.interpolated}, {"missing", trep.missing}}},
                {"groups", window_report_json(wrep)},
                {"pool", window_report_json(prep)}});
    say(log, "ingest: " + std::to_string(meters.size()) + " meters, " + std::to_string(positives.size()) +
                 " positive groups");
}

std::size_t negative_count(const RunConfig& c, std::size_t positives) {
    return static_cast<std::size_t>(std::llround(c.classifier.negative_ratio * static_cast<double>(positives)));
}

void cmd_nsg(const RunConfig& c, const fs::path& out, const Log& log) {
    const auto positives = need_set(paths::positives(out), "positives");
    const auto pool = need_set(paths::pool(out), "profile pool");
    const fs::path dir = fresh(out / "nsg");
    const std::size_t count = negative_count(c, positives.size());
    const std::size_t n = c.data.window.households;
    nsg::Report rep;
    SampleSet negatives;
    ordered summary;
    if (c.nsg.method == "nsg") {
        const auto ref = nsg::fit_reference(positives, c.nsg.criteria);
        negatives = nsg::generate_negatives(pool, ref, c.nsg.criteria, n, count, derive_seed(c.seed, "nsg"), &rep);
        summary["reference"] = nsg::to_json(ref);
    } else {
        negatives = nsg::random_groups(pool, n, count, derive_seed(c.seed, "nsg"), Provenance::random_assembled,
                                       LabelState::negative, &rep);
    }
    save_sample_set(paths::negatives(out), negatives);
    summary["method"] = c.nsg.method;
    summary["requested"] = rep.requested;
    summary["produced"] = rep.produced;
    summary["shortfall"] = rep.shortfall;
    write_json(dir / "report.json", summary);
    say(log, "nsg: " + std::to_string(rep.produced) + " of " + std::to_string(rep.requested) + " negatives");
}

void cmd_train_dlc(const RunConfig& c, const fs::path& out, const Log& log) {
    const auto positives = need_set(paths::positives(out), "positives");
    const auto negatives = need_set(paths::negatives(out), "negatives");
    auto model = dlc::train_classifier(positives, negatives, nullptr, c.classifier, c.codec);
    const fs::path dir = fresh(paths::classifier(out));
    dlc::save_classifier(dir, model);
    for (const auto& w : model.warnings) say(log, "train-dlc warning: " + w);
    std::ostringstream os;
    os << "train-dlc: test accuracy " << model.test_accuracy << " (" << model.train_count << " train, "
       << model.test_count << " test)";
    say(log, os.str());
}

void cmd_train_gan(const RunConfig& c, const fs::path& out, const Log& log, gan::ModelMode mode) {
    const auto positives = need_set(paths::positives(out), "positives");
    const gan::GanConfig& cfg = mode == gan::ModelMode::multi ? c.multi : c.single;
    auto model = gan::build_model(cfg);
    const auto data = gan::groups_to_data(positives, c.codec, mode);
    const fs::path dir = fresh(paths::gan(out, mode));
    gan::TrainOptions opt;
    opt.epochs = cfg.epochs;
    const std::string name = mode == gan::ModelMode::multi ? "train-multi" : "train-single";
    opt.on_epoch = [&](const gan::EpochStats& s) {
        if (s.epoch % 10 == 0 || s.epoch == cfg.epochs) {
            std::ostringstream os;
            os << name << ": epoch " << s.epoch << " loss_d " << s.loss_d << " loss_g " << s.loss_g;
            say(log, os.str());
        }
    };
    gan::train(model, data, nullptr, opt);
    gan::save_model(dir, model);
}

std::size_t eval_count(const RunConfig& c, const SampleSet& real) { return c.evaluate.count ? c.evaluate.count : real.size(); }

SampleSet generate_set(const RunConfig& c, const fs::path& out, gan::ModelMode mode, const SampleSet& real,
                       ordered* summary) {
    auto model = gan::load_model(paths::gan(out, mode));
    gan::SampleReport rep;
    const std::string label = mode == gan::ModelMode::multi ? "generate/multi" : "generate/single";
    auto set = gan::sample_groups(model, eval_count(c, real), derive_seed(c.seed, label), c.codec, real, &rep);
    if (summary) {
        (*summary)[gan::to_string(mode)] = {{"count", set.size()}, {"off_curve", rep.off_curve},
                                            {"max_distance", rep.max_distance}};
    }
    return set;
}

void cmd_generate(const RunConfig& c, const fs::path& out, const Log& log) {
    const auto real = need_set(paths::positives(out), "positives");
    fresh(out / "generated");
    ordered summary = ordered::object();
    std::size_t made = 0;
    for (auto mode : {gan::ModelMode::multi, gan::ModelMode::single}) {
        if (!fs::exists(paths::gan(out, mode) / "config.json")) continue;
        const auto set = generate_set(c, out, mode, real, &summary);
        save_sample_set(paths::generated(out, mode), set);
        say(log, "generate: " + std::to_string(set.size()) + " " + gan::to_string(mode) + " groups");
        ++made;
    }
    if (!made) throw std::runtime_error("generate: no trained GAN under " + out.string());
    write_json(out / "generated" / "summary.json", summary);
}

SampleSet eval_set(const std::string& override_dir, const RunConfig& c, const fs::path& out, gan::ModelMode mode,
                   const SampleSet& real, ordered& summary) {
    if (!override_dir.empty()) return need_set(override_dir, gan::to_string(mode) + " set");
    if (fs::exists(paths::generated(out, mode) / "manifest.json")) return load_sample_set(paths::generated(out, mode));
    if (!fs::exists(paths::gan(out, mode) / "config.json")) {
        throw std::runtime_error("evaluate: no " + gan::to_string(mode) + " samples or model under " + out.string());
    }
    return generate_set(c, out, mode, real, &summary);
}

void cmd_evaluate(const RunConfig& c, const fs::path& out, const Log& log) {
    const auto real = need_set(c.evaluate.real.empty() ? paths::positives(out) : fs::path(c.evaluate.real), "real set");
    ordered gen_summary = ordered::object();
    const auto multi = eval_set(c.evaluate.multi, c, out, gan::ModelMode::multi, real, gen_summary);
    const auto single = eval_set(c.evaluate.single, c, out, gan::ModelMode::single, real, gen_summary);
    const fs::path dir = fresh(paths::eval(out));

    stats::ReportInputs in;
    in.real = &real;
    in.multi = &multi;
    in.single = &single;
    in.config = c.evaluate.indices;
    in.metadata["preset"] = c.preset;
    in.metadata["seed"] = c.seed;
    in.metadata["real_count"] = real.size();
    in.metadata["multi_count"] = multi.size();
    in.metadata["single_count"] = single.size();
    if (!gen_summary.empty()) in.metadata["generated"] = gen_summary;
    if (fs::exists(paths::classifier(out) / "config.json")) {
        auto model = dlc::load_classifier(paths::classifier(out));
        const auto r = dlc::score(model, real, c.codec);
        const auto m = dlc::score(model, multi, c.codec);
        const auto s = dlc::score(model, single, c.codec);
        dlc::write_scores_csv(dir / "scores_real.csv", r);
        dlc::write_scores_csv(dir / "scores_multi.csv", m);
        dlc::write_scores_csv(dir / "scores_single.csv", s);
        in.scores = stats::ClassifierScores{r.scores, m.scores, s.scores};
        in.metadata["classifier_version"] = model.version;
        in.metadata["classifier_test_accuracy"] = model.test_accuracy;
    } else {
        say(log, "evaluate: no classifier under " + paths::classifier(out).string() + ", classifier block omitted");
    }
    const auto report = stats::build_report(in);
    write_json(dir / "report.json", report);
    if (c.evaluate.plots) stats::write_plots(dir / "plots", in);
    say(log, "evaluate: report written to " + (dir / "report.json").string());
}

void cmd_ada(const RunConfig& c, const fs::path& out, const Log& log) {
    const auto positives = need_set(paths::positives(out), "positives");
    const auto negatives = need_set(paths::negatives(out), "negatives");
    const auto pool = need_set(paths::pool(out), "profile pool");
    ada::AdaState state;
    state.gan = gan::load_model(paths::gan(out, gan::ModelMode::multi));
    state.classifier = dlc::load_classifier(paths::classifier(out));
    state.base_epochs = state.gan.config.epochs;
    const fs::path dir = fresh(paths::ada(out));
    ada::Inputs in;
    in.positives = &positives;
    in.negatives = &negatives;
    in.pool = &pool;
    in.levels = c.codec;
    in.audit_dir = dir;
    ada::run(state, c.ada, in, [&](const ada::StepMetrics& m) {
        std::ostringstream os;
        os << "ada: step " << m.step << " cls_acc " << m.cls_acc << " por_gen " << m.por_gen << " (real "
           << m.por_real << ") score_fid " << m.score_fid << " augmented " << m.augmented;
        say(log, os.str());
    });
    gan::save_model(dir / "gan", state.gan);
    dlc::save_classifier(dir / "classifier", state.classifier);
    write_json(dir / "warnings.json", ordered(state.warnings));
}

std::string fmt(const ordered& v) {
    if (v.is_number_float()) {
        std::ostringstream os;
        os.precision(6);
        os << v.get<double>();
        return os.str();
    }
    if (v.is_null()) return "-";
    return v.is_string() ? v.get<std::string>() : v.dump();
}

void cmd_report(const RunConfig&, const fs::path& out, const Log& log) {
    const fs::path src = paths::eval(out) / "report.json";
    std::ifstream is(src);
    if (!is) throw std::runtime_error("report: " + src.string() + " not found (run evaluate first)");
    const ordered r = ordered::parse(is);
    std::ostringstream md;
    md << "# Evaluation report\n\n";
    if (r.contains("statistics")) {
        md << "| level | index | FID multi | FID single | ratio |\n|---|---|---|---|---|\n";
        for (const auto& [level, block] : r.at("statistics").items()) {
            for (const auto& [index, e] : block.items()) {
                md << "| " << level << " | " << index << " | " << fmt(e.value("fid_multi", ordered())) << " | "
                   << fmt(e.value("fid_single", ordered())) << " | " << fmt(e.value("ratio", ordered())) << " |\n";
            }
        }
    }
    if (r.contains("classifier")) {
        md << "\n## Classifier\n\n| set | POR | MCL |\n|---|---|---|\n";
        for (const auto& [name, block] : r.at("classifier").items()) {
            if (!block.is_object() || !block.contains("por")) continue;
            md << "| " << name << " | " << fmt(block.at("por")) << " | " << fmt(block.value("mcl", ordered())) << " |\n";
        }
    }
    if (fs::exists(paths::ada(out) / "metrics.csv")) {
        md << "\n## Augmentation steps\n\n```\n";
        std::ifstream m(paths::ada(out) / "metrics.csv");
        md << m.rdbuf() << "```\n";
    }
    std::ofstream(out / "report.md") << md.str();
    say(log, "report: " + (out / "report.md").string());
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"synth-data", "ingest",   "train-single", "train-multi", "nsg",
                                                "train-dlc",  "generate", "evaluate",     "ada",         "report"};
    return names;
}

void run_command(const std::string& command, const RunConfig& config, const fs::path& out, const Log& log) {
    const auto& names = command_names();
    if (std::find(names.begin(), names.end(), command) == names.end()) {
        throw std::invalid_argument("unknown command '" + command + "'");
    }
    fs::create_directories(out);
    write_json(out / "config.resolved.json", to_json(config));
    if (command == "synth-data") cmd_synth(config, out, log);
    else if (command == "ingest") cmd_ingest(config, out, log);
    else if (command == "train-single") cmd_train_gan(config, out, log, gan::ModelMode::single);
    else if (command == "train-multi") cmd_train_gan(config, out, log, gan::ModelMode::multi);
    else if (command == "nsg") cmd_nsg(config, out, log);
    else if (command == "train-dlc") cmd_train_dlc(config, out, log);
    else if (command == "generate") cmd_generate(config, out, log);
    else if (command == "evaluate") cmd_evaluate(config, out, log);
    else if (command == "ada") cmd_ada(config, out, log);
    else cmd_report(config, out, log);
}

}  // namespace loadgan::pipeline
