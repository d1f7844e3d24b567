#include "loadgan/dlc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "loadgan/gan.hpp"
#include "loadgan/metrics.hpp"
#include "loadgan/rng.hpp"

namespace loadgan::dlc {

using ad::Tensor;
using json_util::ConfigError;
using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

ad::Shape ClassifierConfig::input_shape() const { return {raw_input ? std::size_t{1} : std::size_t{4}, steps, households}; }

void ClassifierConfig::validate() const {
    if (steps == 0 || households == 0) throw ConfigError("classifier: empty input shape");
    if (layers.empty()) throw ConfigError("classifier: empty layer stack");
    if (layers.back().activation != Activation::none) throw ConfigError("classifier: last layer must emit a raw logit");
    if (!(lr > 0.0)) throw ConfigError("classifier: learning rate must be positive");
    if (!(rms_decay > 0.0 && rms_decay < 1.0) || !(rms_eps > 0.0)) throw ConfigError("classifier: bad RMSProp settings");
    if (batch == 0) throw ConfigError("classifier: batch must be positive");
    if (!(negative_ratio > 0.0)) throw ConfigError("classifier: negative ratio must be positive");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("classifier: test fraction must be in [0, 1)");
}

namespace {

LayerSpec conv(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.in = in;
    s.out = out;
    s.kernel = {3, 3};
    s.stride = {1, 1};
    s.pad = {1, 1};
    s.norm = true;
    s.activation = Activation::relu;
    return s;
}

LayerSpec pool() {
    LayerSpec s;
    s.kind = LayerKind::max_pool;
    s.kernel = {2, 1};
    return s;
}

LayerSpec dense(std::size_t in, std::size_t out, bool last) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in = in;
    s.out = out;
    s.activation = last ? Activation::none : Activation::relu;
    return s;
}

ClassifierConfig build(std::size_t steps, std::size_t households, const std::vector<std::size_t>& channels,
                       const std::vector<std::size_t>& widths) {
    ClassifierConfig c;
    c.steps = steps;
    c.households = households;
    const std::size_t shrink = std::size_t{1} << channels.size();
    if (steps % shrink != 0) {
        throw ConfigError("classifier preset needs steps divisible by " + std::to_string(shrink));
    }
    std::size_t in = 4;
    for (std::size_t ch : channels) {
        c.layers.push_back(conv(in, ch));
        c.layers.push_back(pool());
        in = ch;
    }
    LayerSpec flat;
    flat.kind = LayerKind::flatten;
    c.layers.push_back(flat);
    std::size_t features = in * (steps / shrink) * households;
    for (std::size_t w : widths) {
        c.layers.push_back(dense(features, w, false));
        features = w;
    }
    c.layers.push_back(dense(features, 1, true));
    return c;
}

}  // namespace

ClassifierConfig desk_classifier(std::size_t steps, std::size_t households) {
    return build(steps, households, {8, 16, 32}, {64, 32});
}

ClassifierConfig paper_classifier(std::size_t steps, std::size_t households) {
    auto c = build(steps, households, {16, 32, 64, 128, 256}, {512, 128, 32, 8});
    c.epochs = 50;
    return c;
}

json_util::ordered to_json(const ClassifierConfig& c) {
    json_util::ordered j;
    j["steps"] = c.steps;
    j["households"] = c.households;
    j["raw_input"] = c.raw_input;
    j["lr"] = c.lr;
    j["rms_decay"] = c.rms_decay;
    j["rms_eps"] = c.rms_eps;
    j["batch"] = c.batch;
    j["epochs"] = c.epochs;
    j["negative_ratio"] = c.negative_ratio;
    j["test_fraction"] = c.test_fraction;
    j["seed"] = c.seed;
    auto& l = j["layers"] = json_util::ordered::array();
    for (const auto& s : c.layers) l.push_back(gan::to_json(s));
    return j;
}

ClassifierConfig classifier_config_from_json(const json_util::json& j, const std::string& where) {
    json_util::Reader r(j, where);
    ClassifierConfig c;
    std::string preset = "desk";
    r.get("preset", preset);
    if (preset != "desk" && preset != "paper") throw json_util::ConfigError(where + ".preset: expected desk or paper");
    if (preset == "paper") {
        c.steps = 672;
        c.households = 8;
    }
    r.get("steps", c.steps);
    r.get("households", c.households);
    const ClassifierConfig base =
        preset == "paper" ? paper_classifier(c.steps, c.households) : desk_classifier(c.steps, c.households);
    const std::size_t steps = c.steps, households = c.households;
    c = base;
    c.steps = steps;
    c.households = households;
    r.get("raw_input", c.raw_input);
    r.get("lr", c.lr);
    r.get("rms_decay", c.rms_decay);
    r.get("rms_eps", c.rms_eps);
    r.get("batch", c.batch);
    r.get("epochs", c.epochs);
    r.get("negative_ratio", c.negative_ratio);
    r.get("test_fraction", c.test_fraction);
    r.get("seed", c.seed);
    if (const auto* l = r.child("layers")) {
        c.layers.clear();
        for (std::size_t i = 0; i < l->size(); ++i)
            c.layers.push_back(gan::layer_spec_from_json((*l)[i], where + ".layers[" + std::to_string(i) + "]"));
    } else if (c.raw_input) {
        c.layers.front().in = 1;
    }
    r.finish();
    c.validate();
    return c;
}

std::pair<std::size_t, std::size_t> split_sizes(std::size_t count, double test_fraction) {
    const auto test = static_cast<std::size_t>(std::llround(static_cast<double>(count) * test_fraction));
    return {count - test, test};
}

std::vector<double> classifier_input(const LoadGroup& g, const ClassifierConfig& config,
                                     const codec::EncodingLevels& levels) {
    if (g.steps != config.steps || g.households != config.households) {
        throw ad::ShapeError("classifier: group " + g.id + " is " + std::to_string(g.steps) + "x" +
                             std::to_string(g.households) + ", model expects " + std::to_string(config.steps) + "x" +
                             std::to_string(config.households));
    }
    const LoadGroup c = canonical_columns(g);
    if (config.raw_input) {
        std::vector<double> v(c.kw.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = c.kw[i] / levels.l3;
        return v;
    }
    return codec::encode_group(c, levels).data;
}

namespace {

struct Example {
    std::vector<double> x;
    double y;
};

Tensor stack(const std::vector<const Example*>& items, const ad::Shape& shape, std::vector<double>* labels) {
    ad::Shape s{items.size()};
    s.insert(s.end(), shape.begin(), shape.end());
    std::vector<double> v;
    v.reserve(items.size() * ad::numel(shape));
    for (const auto* e : items) {
        v.insert(v.end(), e->x.begin(), e->x.end());
        if (labels) labels->push_back(e->y);
    }
    return Tensor::constant(std::move(s), std::move(v));
}

std::vector<double> logits(nn::Network& net, const std::vector<const Example*>& items, const ad::Shape& shape) {
    std::vector<double> out;
    ad::NoGradGuard guard;
    for (std::size_t i = 0; i < items.size(); i += 64) {
        const std::vector<const Example*> chunk(items.begin() + static_cast<long>(i),
                                                items.begin() + static_cast<long>(std::min(items.size(), i + 64)));
        const Tensor z = net.forward(stack(chunk, shape, nullptr), nn::Mode::eval);
        out.insert(out.end(), z.values().begin(), z.values().end());
    }
    return out;
}

double accuracy(nn::Network& net, const std::vector<const Example*>& items, const ad::Shape& shape) {
    if (items.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto z = logits(net, items, shape);
    std::size_t right = 0;
    for (std::size_t i = 0; i < items.size(); ++i) right += (z[i] > 0.0) == (items[i]->y > 0.5);
    return static_cast<double>(right) / static_cast<double>(items.size());
}

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

ClassifierModel train_classifier(const SampleSet& positives, const SampleSet& negatives,
                                 const SampleSet* machine_labeled, const ClassifierConfig& config,
                                 const codec::EncodingLevels& levels, std::size_t version) {
    config.validate();
    if (positives.empty() || negatives.empty()) throw std::invalid_argument("classifier: both classes need samples");
    ClassifierModel m;
    m.config = config;
    m.version = version;
    Rng init(derive_seed(config.seed, "init/classifier"));
    m.network = nn::Network(config.layers, config.input_shape(), init);
    if (m.network.output_shape() != ad::Shape{1}) {
        throw ad::ShapeError("classifier: stack output " + ad::to_string(m.network.output_shape()) + " is not a single logit");
    }
    const double ratio = static_cast<double>(std::max(positives.size(), negatives.size())) /
                         static_cast<double>(std::min(positives.size(), negatives.size()));
    if (ratio > 10.0) {
        std::ostringstream os;
        os << "class imbalance " << positives.size() << ":" << negatives.size() << " exceeds 1:10";
        m.warnings.push_back(os.str());
    }

    std::vector<Example> examples;
    std::vector<std::size_t> train_idx, test_idx;
    Rng split(derive_seed(config.seed, "split"));
    for (const auto* set : {&positives, &negatives}) {
        const double y = set == &positives ? 1.0 : 0.0;
        const auto order = split.permutation(set->size());
        const auto [n_train, n_test] = split_sizes(set->size(), config.test_fraction);
        for (std::size_t i = 0; i < order.size(); ++i) {
            (i < n_test ? test_idx : train_idx).push_back(examples.size());
            examples.push_back({classifier_input(set->groups[order[i]], config, levels), y});
        }
        (void)n_train;
    }
    if (machine_labeled) {
        for (std::size_t i = 0; i < machine_labeled->size(); ++i) {
            const auto state = machine_labeled->labels[i].state;
            if (state == LabelState::unlabeled) continue;
            train_idx.push_back(examples.size());
            examples.push_back({classifier_input(machine_labeled->groups[i], config, levels),
                                state == LabelState::positive ? 1.0 : 0.0});
        }
    }
    std::vector<const Example*> train, test;
    for (auto i : train_idx) train.push_back(&examples[i]);
    for (auto i : test_idx) test.push_back(&examples[i]);
    m.train_count = train.size();
    m.test_count = test.size();

    const ad::Shape shape = config.input_shape();
    const std::size_t batch = std::min(config.batch, train.size());
    const nn::RmsProp opt{config.lr, config.rms_decay, config.rms_eps};
    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::vector<std::vector<double>> good;
        for (const auto& p : m.network.params().entries()) good.emplace_back(p.value.values().begin(), p.value.values().end());
        Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(e)));
        const auto order = rng.permutation(train.size());
        double loss_sum = 0.0;
        std::size_t batches = 0;
        // A trailing batch of one would leave batch statistics undefined.
        for (std::size_t b = 0; b + batch <= train.size() && batch > 1; b += batch) {
            std::vector<const Example*> items;
            for (std::size_t i = b; i < b + batch; ++i) items.push_back(train[order[i]]);
            std::vector<double> y;
            const Tensor x = stack(items, shape, &y);
            const Tensor z = m.network.forward(x, nn::Mode::train);
            const Tensor target = Tensor::constant({y.size(), 1}, y);
            // Binary cross-entropy on logits: softplus(z) - y z.
            const Tensor loss = ad::mean(ad::softplus(z) - target * z);
            const double lv = loss.item();
            if (!std::isfinite(lv) || std::abs(lv) > 1e6) {
                auto& entries = m.network.params().entries();
                for (std::size_t i = 0; i < entries.size(); ++i)
                    std::copy(good[i].begin(), good[i].end(), entries[i].value.mutable_values().begin());
                throw DivergenceError("classifier training diverged in epoch " + std::to_string(e + 1) +
                                      "; parameters restored to the previous epoch");
            }
            opt.step(m.network.params(), ad::backward(loss));
            loss_sum += lv;
            ++batches;
        }
        EpochRecord rec;
        rec.epoch = e + 1;
        rec.loss = batches ? loss_sum / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
        rec.test_accuracy = accuracy(m.network, test, shape);
        m.history.push_back(rec);
    }
    m.test_accuracy = accuracy(m.network, test, shape);
    return m;
}

ScoreSet score(ClassifierModel& model, const SampleSet& samples, const codec::EncodingLevels& levels) {
    ScoreSet out;
    if (samples.empty()) return out;
    std::vector<Example> ex;
    ex.reserve(samples.size());
    for (const auto& g : samples.groups) {
        ex.push_back({classifier_input(g, model.config, levels), 0.0});
        out.ids.push_back(g.id);
    }
    std::vector<const Example*> items;
    for (const auto& e : ex) items.push_back(&e);
    for (double z : logits(model.network, items, model.config.input_shape())) out.scores.push_back(sigmoid(z));
    return out;
}

double score_fid(const ScoreSet& a, const ScoreSet& b) { return metrics::frechet_1d(a.scores, b.scores); }

void write_scores_csv(const std::filesystem::path& path, const ScoreSet& s) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "sample_id,score,label_at_0.5\n";
    char buf[64];
    for (std::size_t i = 0; i < s.size(); ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g,%d\n", s.scores[i], s.scores[i] > 0.5 ? 1 : 0);
        os << s.ids[i] << buf;
    }
}

ScoreSet read_scores_csv(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    std::string line;
    std::getline(is, line);
    if (line != "sample_id,score,label_at_0.5") throw std::runtime_error(path.string() + ": unexpected header");
    ScoreSet s;
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (line.empty()) continue;
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos) {
            throw std::runtime_error(path.string() + ": malformed line " + std::to_string(n));
        }
        s.ids.push_back(line.substr(0, a));
        s.scores.push_back(std::stod(line.substr(a + 1, b - a - 1)));
    }
    return s;
}

void save_classifier(const std::filesystem::path& dir, const ClassifierModel& m) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir / "config.json", std::ios::trunc);
        os << to_json(m.config).dump(2) << '\n';
    }
    nn::save_checkpoint(dir / "classifier.ckpt", m.network.params(),
                        {nn::checkpoint_version, m.network.fingerprint(), m.config.seed});
    json_util::ordered st;
    st["version"] = m.version;
    st["test_accuracy"] = std::isfinite(m.test_accuracy) ? json_util::ordered(m.test_accuracy) : json_util::ordered(nullptr);
    st["train_count"] = m.train_count;
    st["test_count"] = m.test_count;
    st["warnings"] = m.warnings;
    auto& h = st["history"] = json_util::ordered::array();
    for (const auto& r : m.history) {
        h.push_back({r.epoch, std::isfinite(r.loss) ? json_util::ordered(r.loss) : json_util::ordered(nullptr),
                     std::isfinite(r.test_accuracy) ? json_util::ordered(r.test_accuracy) : json_util::ordered(nullptr)});
    }
    std::ofstream os(dir / "state.json", std::ios::trunc);
    os << st.dump(1) << '\n';
}

ClassifierModel load_classifier(const std::filesystem::path& dir) {
    std::ifstream cs(dir / "config.json");
    if (!cs) throw std::runtime_error("no classifier config in " + dir.string());
    ClassifierModel m;
    m.config = classifier_config_from_json(json_util::json::parse(cs));
    Rng init(0);
    m.network = nn::Network(m.config.layers, m.config.input_shape(), init);
    nn::load_checkpoint(dir / "classifier.ckpt", m.network.params(), m.network.fingerprint());
    std::ifstream ss(dir / "state.json");
    if (!ss) throw std::runtime_error("no classifier state in " + dir.string());
    const auto st = json_util::json::parse(ss);
    auto num = [](const json_util::json& v) {
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    };
    m.version = st.at("version").get<std::size_t>();
    m.test_accuracy = num(st.at("test_accuracy"));
    m.train_count = st.at("train_count").get<std::size_t>();
    m.test_count = st.at("test_count").get<std::size_t>();
    m.warnings = st.at("warnings").get<std::vector<std::string>>();
    for (const auto& r : st.at("history")) m.history.push_back({r.at(0).get<std::size_t>(), num(r.at(1)), num(r.at(2))});
    return m;
}

}  // namespace loadgan::dlc
