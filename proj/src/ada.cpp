#include "loadgan/ada.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "loadgan/metrics.hpp"
#include "loadgan/nsg.hpp"
#include "loadgan/rng.hpp"

namespace loadgan::ada {

void AdaConfig::validate() const {
    if (!(cut > 0.5 && cut <= 1.0)) throw std::invalid_argument("ada.cut must lie in (0.5, 1]");
    if (!(eps_acc >= 0.0)) throw std::invalid_argument("ada.eps_acc must be non-negative");
    if (!(gan_fraction >= 0.0)) throw std::invalid_argument("ada.gan_fraction must be non-negative");
    if (n_gan + n_rand == 0) throw std::invalid_argument("ada: n_gan + n_rand must be positive");
    if (eval_count < 2) throw std::invalid_argument("ada.eval_count must be at least 2");
}

json_util::ordered to_json(const AdaConfig& c) {
    json_util::ordered j;
    j["cut"] = c.cut;
    j["eps_acc"] = c.eps_acc;
    j["max_steps"] = c.max_steps;
    j["gan_fraction"] = c.gan_fraction;
    j["n_gan"] = c.n_gan;
    j["n_rand"] = c.n_rand;
    j["eval_count"] = c.eval_count;
    j["seed"] = c.seed;
    return j;
}

AdaConfig ada_config_from_json(const json_util::json& j, const std::string& where) {
    json_util::Reader r(j, where);
    AdaConfig c;
    r.get("cut", c.cut);
    r.get("eps_acc", c.eps_acc);
    r.get("max_steps", c.max_steps);
    r.get("gan_fraction", c.gan_fraction);
    r.get("n_gan", c.n_gan);
    r.get("n_rand", c.n_rand);
    r.get("eval_count", c.eval_count);
    r.get("seed", c.seed);
    r.finish();
    c.validate();
    return c;
}

SampleSet make_unlabeled(gan::GanModel& gan, const SampleSet& pool, const SampleSet& conditioning,
                         std::size_t n_gan, std::size_t n_rand, std::uint64_t seed,
                         const codec::EncodingLevels& levels, UnlabeledReport* report) {
    if (gan.config.mode != gan::ModelMode::multi) throw std::invalid_argument("make_unlabeled: needs a multi-mode GAN");
    SampleSet out = gan::sample_groups(gan, n_gan, derive_seed(seed, "gan"), levels, conditioning);
    for (auto& l : out.labels) l = Label{};
    nsg::Report rep;
    const SampleSet rand = nsg::random_groups(pool, gan.config.households, n_rand, derive_seed(seed, "rand"),
                                              Provenance::random_assembled, LabelState::unlabeled, &rep);
    out.append(rand);
    if (report) *report = {n_gan, rand.size(), rep.shortfall};
    return out;
}

Quality measure(gan::GanModel& gan, dlc::ClassifierModel& classifier, const Inputs& in, std::size_t count,
                std::uint64_t seed) {
    const SampleSet generated = gan::sample_groups(gan, count, seed, in.levels, *in.positives);
    const auto real = dlc::score(classifier, *in.positives, in.levels);
    const auto gen = dlc::score(classifier, generated, in.levels);
    Quality q;
    q.por_real = metrics::por(real.scores);
    q.por_gen = metrics::por(gen.scores);
    q.mcl_gen = metrics::mcl(gen.scores);
    q.score_fid = dlc::score_fid(gen, real);
    return q;
}

namespace {

void require(const Inputs& in) {
    if (!in.positives || !in.negatives || !in.pool) throw std::invalid_argument("ada: positives, negatives and pool are required");
}

std::filesystem::path step_dir(const Inputs& in, std::size_t step) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%03zu", step);
    return in.audit_dir / name;
}

}  // namespace

void ada_step(AdaState& state, const AdaConfig& config, const Inputs& in) {
    require(in);
    config.validate();
    const std::size_t t = state.step + 1;
    const std::uint64_t seed = derive_seed(config.seed, "step/" + std::to_string(t));
    StepMetrics m;
    m.step = t;

    // 1. unlabeled pool from the current generator and random assembly
    UnlabeledReport urep;
    SampleSet unlabeled = make_unlabeled(state.gan, *in.pool, *in.positives, config.n_gan, config.n_rand,
                                         derive_seed(seed, "unlabeled"), in.levels, &urep);
    m.unlabeled = unlabeled.size();
    m.rand_shortfall = urep.rand_shortfall;
    if (urep.rand_shortfall) {
        state.warnings.push_back("step " + std::to_string(t) + ": random assembly short by " +
                                 std::to_string(urep.rand_shortfall));
    }

    // 2. machine labels from the previous classifier
    const auto prior = dlc::score(state.classifier, unlabeled, in.levels);
    SampleSet labeled = unlabeled;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        const bool positive = prior.scores[i] > 0.5;
        labeled.labels[i] = {positive ? LabelState::positive : LabelState::negative, prior.scores[i]};
        m.machine_positive += positive;
    }

    // 3. retrain on ground truth plus machine labels
    dlc::ClassifierConfig ccfg = state.classifier.config;
    ccfg.seed = derive_seed(seed, "classifier");
    dlc::ClassifierModel classifier = dlc::train_classifier(*in.positives, *in.negatives, &labeled, ccfg, in.levels,
                                                            state.classifier.version + 1);
    for (const auto& w : classifier.warnings) state.warnings.push_back("step " + std::to_string(t) + ": " + w);

    // 4. harvest confident random groups
    SampleSet rand_part;
    for (std::size_t i = urep.gan; i < unlabeled.size(); ++i) rand_part.add(unlabeled.groups[i], unlabeled.labels[i]);
    const auto rand_scores = dlc::score(classifier, rand_part, in.levels);
    SampleSet augmented;
    for (std::size_t i = 0; i < rand_part.size(); ++i) {
        if (rand_scores.scores[i] > config.cut) {
            augmented.add(rand_part.groups[i], {LabelState::positive, rand_scores.scores[i]});
        }
    }
    m.augmented = augmented.size();
    m.unaugmented = augmented.empty();
    if (m.unaugmented) state.warnings.push_back("step " + std::to_string(t) + ": nothing above the cut, GAN continues unaugmented");

    // 5. GAN continuation with the harvest mixed into the real pool
    const Quality before = measure(state.gan, classifier, in, config.eval_count, derive_seed(seed, "eval"));
    const std::size_t base = state.base_epochs ? state.base_epochs : state.gan.config.epochs;
    gan::TrainOptions opt;
    opt.epochs = static_cast<std::size_t>(std::llround(config.gan_fraction * static_cast<double>(base)));
    const gan::TrainData real = gan::groups_to_data(*in.positives, in.levels, gan::ModelMode::multi);
    const gan::TrainData aug = gan::groups_to_data(augmented, in.levels, gan::ModelMode::multi);
    gan::train(state.gan, real, augmented.empty() ? nullptr : &aug, opt);

    // 6. metrics with the new classifier as the single judge
    const Quality after = measure(state.gan, classifier, in, config.eval_count, derive_seed(seed, "eval"));
    m.cls_acc = classifier.test_accuracy;
    m.por_real = after.por_real;
    m.por_gen = after.por_gen;
    m.mcl_gen = after.mcl_gen;
    m.score_fid = after.score_fid;
    m.por_gen_before = before.por_gen;
    m.score_fid_before = before.score_fid;

    if (!in.audit_dir.empty()) {
        const auto dir = step_dir(in, t);
        std::filesystem::create_directories(dir);
        save_sample_set(dir / "unlabeled", unlabeled);
        save_sample_set(dir / "labeled", labeled);
        save_sample_set(dir / "augmented", augmented);
        dlc::write_scores_csv(dir / "rand_scores.csv", rand_scores);
        json_util::ordered j;
        j["step"] = t;
        j["classifier_version"] = classifier.version;
        j["cls_acc"] = m.cls_acc;
        j["unlabeled"] = m.unlabeled;
        j["machine_positive"] = m.machine_positive;
        j["augmented"] = m.augmented;
        j["unaugmented"] = m.unaugmented;
        j["rand_shortfall"] = m.rand_shortfall;
        j["gan_epochs"] = opt.epochs;
        j["before"] = {{"por_gen", before.por_gen}, {"mcl_gen", before.mcl_gen}, {"score_fid", before.score_fid}};
        j["after"] = {{"por_real", after.por_real}, {"por_gen", after.por_gen}, {"mcl_gen", after.mcl_gen},
                      {"score_fid", after.score_fid}};
        std::ofstream(dir / "summary.json") << j.dump(2) << '\n';
    }

    state.classifier = std::move(classifier);
    state.history.push_back(m);
    state.step = t;
}

void run(AdaState& state, const AdaConfig& config, const Inputs& in,
         const std::function<void(const StepMetrics&)>& on_step) {
    config.validate();
    std::size_t calm = 0;
    double previous = state.history.empty() ? state.classifier.test_accuracy : state.history.back().cls_acc;
    for (std::size_t i = 0; i < config.max_steps; ++i) {
        ada_step(state, config, in);
        const auto& m = state.history.back();
        if (on_step) on_step(m);
        calm = std::abs(m.cls_acc - previous) < config.eps_acc ? calm + 1 : 0;
        previous = m.cls_acc;
        if (calm >= 2) break;
    }
    if (!in.audit_dir.empty()) write_metrics_csv(in.audit_dir / "metrics.csv", state.history);
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<StepMetrics>& history) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "step,cls_acc,por_real,por_gen,mcl_gen,score_fid\n";
    char line[256];
    for (const auto& m : history) {
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", m.step, m.cls_acc, m.por_real, m.por_gen,
                      m.mcl_gen, m.score_fid);
        os << line;
    }
}

}  // namespace loadgan::ada
