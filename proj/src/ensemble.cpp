#include "caee/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "caee/checkpoint.hpp"
#include "caee/errors.hpp"
#include "caee/parallel.hpp"

namespace caee {

namespace {

// Fixed gradient partitions per batch; the reduction order never depends on the worker count.
constexpr std::size_t kGradPartitions = 8;

enum SeedStream : std::uint64_t { kEmbeddingInit = 1, kModelInit = 2, kTransfer = 3, kShuffle = 4 };

constexpr int kManifestVersion = 1;

double sq_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

std::vector<Tensor> model_outputs(std::span<const ParamSet> models, const Tensor& x, const CaeConfig& config) {
    std::vector<Tensor> outs;
    outs.reserve(models.size());
    for (const auto& m : models) outs.push_back(reconstruct_embedded(x, m, config));
    return outs;
}

std::size_t window_rows(std::span<const Tensor> x) {
    if (x.empty()) throw ShapeError("empty batch");
    if (x[0].rank() != 2) throw ShapeError("batch entries must be [w x D']");
    return x[0].dim(0);
}

}  // namespace

void EnsembleConfig::validate() const {
    if (models < 1) throw ConfigError("ensemble needs at least one model");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("transfer fraction beta must lie in [0, 1]");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("diversity weight lambda must be >= 0");
    if (batch_size < 1) throw ConfigError("batch size must be at least 1");
}

nlohmann::json EnsembleConfig::to_json() const {
    return {{"models", models},
            {"epochs_per_model", epochs_per_model},
            {"beta", beta},
            {"lambda", lambda},
            {"batch_size", batch_size},
            {"seed", seed},
            {"transfer", transfer},
            {"adam", {{"lr", adam.lr}, {"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}}};
}

EnsembleConfig EnsembleConfig::from_json(const nlohmann::json& j) {
    EnsembleConfig c;
    c.models = j.at("models").get<std::size_t>();
    c.epochs_per_model = j.at("epochs_per_model").get<std::size_t>();
    c.beta = j.at("beta").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.transfer = j.at("transfer").get<bool>();
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        c.adam = {a.at("lr").get<double>(), a.at("beta1").get<double>(), a.at("beta2").get<double>(),
                  a.at("epsilon").get<double>()};
    }
    c.validate();
    return c;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

TransferResult transfer_params(const ParamSet& prev, const ParamSet& fresh, double beta, std::uint64_t seed) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("transfer fraction beta must lie in [0, 1]");
    if (prev.names() != fresh.names()) throw ShapeError("transfer between differently structured models");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    TransferResult result;
    for (std::size_t i = 0; i < prev.size(); ++i) {
        const bool copy = unit(rng) < beta;
        const Tensor& src = copy ? prev[i].value : fresh[i].value;
        if (!src.same_shape(fresh[i].value)) throw ShapeError("transfer shape mismatch for " + prev.name(i));
        result.params.add(prev.name(i), src);
        if (copy) result.copied.push_back(prev.name(i));
    }
    return result;
}

Tensor ensemble_average(std::span<const Tensor> outputs) {
    if (outputs.empty()) throw std::invalid_argument("ensemble average of an empty model list");
    Tensor avg = Tensor::zeros_like(outputs[0]);
    for (const auto& out : outputs) {
        if (!out.same_shape(avg)) throw ShapeError("ensemble outputs differ in shape");
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += out[i];
    }
    const double inv = 1.0 / static_cast<double>(outputs.size());
    for (auto& v : avg.data()) v *= inv;
    return avg;
}

Tensor ensemble_average(std::span<const ParamSet> models, const Tensor& x, const CaeConfig& config) {
    if (models.empty()) throw std::invalid_argument("ensemble average of an empty model list");
    auto outs = model_outputs(models, x, config);
    return ensemble_average(outs);
}

double diversity_pair(const Tensor& a, const Tensor& b) { return std::sqrt(sq_distance(a, b)); }

double diversity_ensemble(std::span<const Tensor> outputs) {
    const std::size_t m = outputs.size();
    if (m < 2) throw std::invalid_argument("ensemble diversity needs at least two models");
    double total = 0.0;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) total += diversity_pair(outputs[a], outputs[b]);
    return 2.0 / (static_cast<double>(m) * static_cast<double>(m - 1)) * total;
}

double diversity_ensemble(std::span<const ParamSet> models, const Tensor& x, const CaeConfig& config) {
    auto outs = model_outputs(models, x, config);
    return diversity_ensemble(outs);
}

double loss_first(std::span<const Tensor> x, std::span<const Tensor> x_hat) {
    if (x.size() != x_hat.size()) throw ShapeError("batch sizes differ");
    const std::size_t w = window_rows(x);
    double j = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) j += sq_distance(x[i], x_hat[i]);
    return j / static_cast<double>(x.size() * w);
}

double loss_diverse(std::span<const Tensor> x, std::span<const Tensor> x_hat, std::span<const Tensor> ensemble_avg,
                    double lambda) {
    if (x.size() != x_hat.size() || x.size() != ensemble_avg.size()) throw ShapeError("batch sizes differ");
    if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
    const std::size_t w = window_rows(x);
    const auto width = static_cast<double>(x[0].dim(1));
    double j = 0.0;
    double k = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        j += sq_distance(x[i], x_hat[i]);
        k += sq_distance(x_hat[i], ensemble_avg[i]);
    }
    return (j - lambda * k / width) / static_cast<double>(x.size() * w);
}

NodeId window_loss(Graph& g, NodeId target, NodeId x_hat, const NodeId* ensemble_avg, double lambda,
                   std::size_t batch_size) {
    const std::size_t w = g.value(x_hat).dim(0);
    const std::size_t width = g.value(x_hat).dim(1);
    NodeId loss = ops::sq_error(g, x_hat, target, ops::Reduce::sum);
    if (ensemble_avg) {
        NodeId k = ops::sq_error(g, x_hat, *ensemble_avg, ops::Reduce::sum);
        loss = ops::sub(g, loss, ops::scale(g, k, lambda / static_cast<double>(width)));
    }
    return ops::scale(g, loss, 1.0 / static_cast<double>(batch_size * w));
}

namespace {

struct TrainingData {
    std::vector<Tensor> windows;   // raw w x D
    std::vector<Tensor> embedded;  // frozen embedding output, filled after model 1
    std::vector<Tensor> output_sum;  // sum of completed model reconstructions
    std::size_t completed = 0;
};

void train_member(EnsembleState& state, ParamSet& params, ModelHistory& history, TrainingData& data,
                  std::size_t model_index, const EpochCallback& on_epoch) {
    const auto& config = state.config;
    const auto& cae = state.cae;
    const bool first = model_index == 0;
    const double lambda = first ? 0.0 : config.lambda;
    const std::size_t count = data.windows.size();
    const double inv_completed = first ? 0.0 : 1.0 / static_cast<double>(data.completed);

    AdamState model_opt = make_adam_state(params, config.adam);
    AdamState emb_opt = make_adam_state(state.embedding, config.adam);
    std::vector<GradBuffer> model_grads(kGradPartitions, params.make_grad_buffer());
    std::vector<GradBuffer> emb_grads(first ? kGradPartitions : 0, state.embedding.make_grad_buffer());
    std::vector<double> part_j(kGradPartitions), part_k(kGradPartitions);

    std::vector<std::size_t> order(count);
    for (std::size_t epoch = 0; epoch < config.epochs_per_model; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(derive_seed(config.seed, kShuffle, model_index * 1000003ULL + epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0, epoch_j = 0.0, epoch_k = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < count; start += config.batch_size) {
            const std::size_t b = std::min(config.batch_size, count - start);
            const std::size_t parts = std::min(kGradPartitions, b);
            parallel_for(parts, config.workers, [&](std::size_t p) {
                zero_buffer(model_grads[p]);
                if (first) zero_buffer(emb_grads[p]);
                double jsum = 0.0, ksum = 0.0;
                const std::size_t lo = start + p * b / parts;
                const std::size_t hi = start + (p + 1) * b / parts;
                for (std::size_t idx = lo; idx < hi; ++idx) {
                    const std::size_t j = order[idx];
                    Graph g;
                    BoundParams bound(g, params, &model_grads[p]);
                    NodeId x;
                    if (first) {
                        BoundParams emb(g, state.embedding, &emb_grads[p]);
                        x = embed(g, g.constant(data.windows[j]), emb);
                    } else {
                        x = g.constant(data.embedded[j]);
                    }
                    NodeId x_hat = autoencode(g, x, bound, cae);
                    NodeId target = g.constant(g.value(x));
                    jsum += sq_distance(g.value(x_hat), g.value(target));
                    NodeId loss;
                    if (first) {
                        loss = window_loss(g, target, x_hat, nullptr, 0.0, b);
                    } else {
                        Tensor avg = data.output_sum[j];
                        for (auto& v : avg.data()) v *= inv_completed;
                        NodeId avg_node = g.constant(std::move(avg));
                        ksum += sq_distance(g.value(x_hat), g.value(avg_node));
                        loss = window_loss(g, target, x_hat, &avg_node, lambda, b);
                    }
                    g.backward(loss);
                }
                part_j[p] = jsum;
                part_k[p] = ksum;
            });

            params.zero_grad();
            for (std::size_t p = 0; p < parts; ++p) params.add_to_grad(model_grads[p]);
            if (first) {
                state.embedding.zero_grad();
                for (std::size_t p = 0; p < parts; ++p) state.embedding.add_to_grad(emb_grads[p]);
            }
            double jsum = 0.0, ksum = 0.0;
            for (std::size_t p = 0; p < parts; ++p) {
                jsum += part_j[p];
                ksum += part_k[p];
            }
            const double norm = static_cast<double>(b * cae.window);
            const double batch_j = jsum / norm;
            const double batch_k = ksum / (norm * static_cast<double>(cae.embed_dim));
            const double batch_loss = batch_j - lambda * batch_k;
            if (!std::isfinite(batch_loss)) {
                throw DivergenceError("non-finite loss in model " + std::to_string(model_index + 1) + ", epoch " +
                                          std::to_string(epoch + 1),
                                      model_index + 1, epoch + 1);
            }
            adam_step(params, model_opt);
            if (first) adam_step(state.embedding, emb_opt);
            epoch_loss += batch_loss;
            epoch_j += batch_j;
            epoch_k += batch_k;
            ++batches;
        }
        const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
        history.loss.push_back(epoch_loss / nb);
        history.reconstruction.push_back(epoch_j / nb);
        history.diversity.push_back(epoch_k / nb);
        if (on_epoch) on_epoch(model_index + 1, epoch + 1, history.loss.back());
    }
}

}  // namespace

EnsembleState train_ensemble(const LabeledSeries& train, const CaeConfig& cae, const EnsembleConfig& config,
                             const EpochCallback& on_epoch) {
    cae.validate();
    config.validate();
    train.validate();
    if (train.dims() != cae.input_dim) {
        throw DataError(train.name + ": series has " + std::to_string(train.dims()) + " dimensions, model expects " +
                        std::to_string(cae.input_dim));
    }
    const WindowBatch batch = make_windows(train, cae.window);

    TrainingData data;
    data.windows.reserve(batch.count());
    for (std::size_t j = 0; j < batch.count(); ++j) data.windows.push_back(batch.window_at(j));

    EnsembleState state;
    state.cae = cae;
    state.config = config;
    {
        std::mt19937_64 rng(derive_seed(config.seed, kEmbeddingInit));
        state.embedding = init_embedding(cae, rng);
    }

    const std::size_t count = data.windows.size();
    for (std::size_t m = 0; m < config.models; ++m) {
        std::mt19937_64 init_rng(derive_seed(config.seed, kModelInit, m));
        ParamSet params = init_cae_params(cae, init_rng);
        ModelHistory history;
        if (m > 0 && config.transfer) {
            auto transferred = transfer_params(state.models.back(), params, config.beta,
                                               derive_seed(config.seed, kTransfer, m));
            params = std::move(transferred.params);
            history.transferred = std::move(transferred.copied);
        }

        train_member(state, params, history, data, m, on_epoch);

        if (m == 0) {
            data.embedded.resize(count);
            parallel_for(count, config.workers,
                         [&](std::size_t j) { data.embedded[j] = embed_window(data.windows[j], state.embedding); });
            data.output_sum.assign(count, Tensor({cae.window, cae.embed_dim}));
        }
        if (m + 1 < config.models) {
            parallel_for(count, config.workers, [&](std::size_t j) {
                Tensor out = reconstruct_embedded(data.embedded[j], params, cae);
                auto& sum = data.output_sum[j];
                for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += out[i];
            });
        }
        ++data.completed;
        state.models.push_back(std::move(params));
        state.history.push_back(std::move(history));
    }
    return state;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty list");
    const std::size_t n = values.size();
    const std::size_t mid = n / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<double> stitch_window_errors(const std::vector<std::vector<double>>& per_window) {
    if (per_window.empty()) return {};
    const std::size_t w = per_window[0].size();
    std::vector<double> out(per_window[0]);
    out.reserve(w + per_window.size() - 1);
    for (std::size_t j = 1; j < per_window.size(); ++j) {
        if (per_window[j].size() != w) throw ShapeError("window error vectors differ in length");
        out.push_back(per_window[j].back());
    }
    return out;
}

ScoreSeries score_series(const EnsembleState& state, const LabeledSeries& series, bool keep_per_model) {
    const auto& cae = state.cae;
    if (state.models.empty()) throw std::invalid_argument("ensemble has no trained models");
    if (series.dims() != cae.input_dim) {
        throw DataError(series.name + ": series has " + std::to_string(series.dims()) + " dimensions, model expects " +
                        std::to_string(cae.input_dim));
    }
    const WindowBatch batch = make_windows(series, cae.window);
    const std::size_t count = batch.count();
    const std::size_t m = state.models.size();

    std::vector<std::vector<std::vector<double>>> errors(m, std::vector<std::vector<double>>(count));
    parallel_for(count, state.config.workers, [&](std::size_t j) {
        const Tensor x = embed_window(batch.window_at(j), state.embedding);
        for (std::size_t i = 0; i < m; ++i) errors[i][j] = window_errors(x, reconstruct_embedded(x, state.models[i], cae));
    });

    const std::size_t length = series.length();
    Tensor per_model({m, length});
    for (std::size_t i = 0; i < m; ++i) {
        auto stitched = stitch_window_errors(errors[i]);
        std::copy(stitched.begin(), stitched.end(), per_model.row(i).begin());
    }

    ScoreSeries out;
    out.scores.resize(length);
    std::vector<double> column(m);
    for (std::size_t t = 0; t < length; ++t) {
        for (std::size_t i = 0; i < m; ++i) column[i] = per_model(i, t);
        out.scores[t] = median(column);
    }
    if (keep_per_model) out.per_model = std::move(per_model);
    return out;
}

double series_diversity(const EnsembleState& state, const LabeledSeries& series) {
    if (state.models.size() < 2) throw ConfigError("diversity needs an ensemble of at least two models");
    const WindowBatch batch = make_windows(series, state.cae.window);
    std::vector<double> per_window(batch.count());
    parallel_for(batch.count(), state.config.workers, [&](std::size_t j) {
        const Tensor x = embed_window(batch.window_at(j), state.embedding);
        per_window[j] = diversity_ensemble(state.models, x, state.cae);
    });
    double total = 0.0;
    for (double v : per_window) total += v;
    return total / static_cast<double>(per_window.size());
}

void save_ensemble(const std::filesystem::path& dir, const EnsembleState& state) {
    std::filesystem::create_directories(dir);
    nlohmann::json meta = {{"format_version", kManifestVersion},
                           {"cae_config", state.cae.to_json()},
                           {"seed", state.config.seed}};

    auto emb_meta = meta;
    emb_meta["role"] = "embedding";
    save_checkpoint(dir / "embedding.ckpt", state.embedding, emb_meta);

    nlohmann::json manifest = {{"format_version", kManifestVersion},
                               {"cae_config", state.cae.to_json()},
                               {"ensemble_config", state.config.to_json()},
                               {"embedding", "embedding.ckpt"},
                               {"models", nlohmann::json::array()}};
    for (std::size_t i = 0; i < state.models.size(); ++i) {
        const std::string file = "model_" + std::to_string(i + 1) + ".ckpt";
        auto model_meta = meta;
        model_meta["role"] = "model";
        model_meta["index"] = i + 1;
        save_checkpoint(dir / file, state.models[i], model_meta);
        nlohmann::json entry = {{"file", file}};
        if (i < state.history.size()) entry["transferred"] = state.history[i].transferred;
        manifest["models"].push_back(entry);
    }
    if (state.scale) manifest["scale"] = {{"mean", state.scale->mean}, {"std", state.scale->std}};

    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

    std::ofstream losses(dir / "losses.csv");
    losses << "model,epoch,loss,reconstruction,diversity\n" << std::setprecision(17);
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        const auto& h = state.history[i];
        for (std::size_t e = 0; e < h.loss.size(); ++e) {
            losses << i + 1 << ',' << e + 1 << ',' << h.loss[e] << ',' << h.reconstruction[e] << ',' << h.diversity[e]
                   << '\n';
        }
    }
}

EnsembleState load_ensemble(const std::filesystem::path& dir) {
    std::ifstream in(dir / "manifest.json");
    if (!in) throw DataError("no manifest.json in " + dir.string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("manifest.json: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != kManifestVersion) throw DataError("unsupported ensemble manifest version");

    EnsembleState state;
    state.cae = CaeConfig::from_json(manifest.at("cae_config"));
    state.config = EnsembleConfig::from_json(manifest.at("ensemble_config"));

    std::mt19937_64 shape_rng(0);
    const ParamSet emb_template = init_embedding(state.cae, shape_rng);
    const ParamSet model_template = init_cae_params(state.cae, shape_rng);
    auto check = [&](const Checkpoint& ckpt, const ParamSet& templ, const std::string& what) {
        if (CaeConfig::from_json(ckpt.metadata.at("cae_config")) != state.cae) {
            throw DataError(what + ": architecture differs from manifest");
        }
        if (ckpt.params.names() != templ.names()) throw DataError(what + ": parameter names differ from architecture");
        for (std::size_t i = 0; i < templ.size(); ++i) {
            if (!ckpt.params[i].value.same_shape(templ[i].value)) {
                throw DataError(what + ": parameter " + templ.name(i) + " has shape " +
                                shape_str(ckpt.params[i].value.shape()));
            }
        }
    };

    auto emb = load_checkpoint(dir / manifest.at("embedding").get<std::string>());
    check(emb, emb_template, "embedding");
    state.embedding = std::move(emb.params);
    for (const auto& entry : manifest.at("models")) {
        const auto file = entry.at("file").get<std::string>();
        auto ckpt = load_checkpoint(dir / file);
        check(ckpt, model_template, file);
        state.models.push_back(std::move(ckpt.params));
        ModelHistory h;
        if (entry.contains("transferred")) h.transferred = entry.at("transferred").get<std::vector<std::string>>();
        state.history.push_back(std::move(h));
    }
    if (manifest.contains("scale")) {
        ScaleParams scale;
        scale.mean = manifest["scale"].at("mean").get<std::vector<double>>();
        scale.std = manifest["scale"].at("std").get<std::vector<double>>();
        state.scale = std::move(scale);
    }

    std::ifstream losses(dir / "losses.csv");
    std::string line;
    if (losses && std::getline(losses, line)) {
        while (std::getline(losses, line)) {
            std::istringstream ss(line);
            std::string cell;
            std::vector<double> cells;
            while (std::getline(ss, cell, ',')) cells.push_back(std::stod(cell));
            if (cells.size() != 5) continue;
            const auto model = static_cast<std::size_t>(cells[0]);
            if (model < 1 || model > state.history.size()) continue;
            auto& h = state.history[model - 1];
            h.loss.push_back(cells[2]);
            h.reconstruction.push_back(cells[3]);
            h.diversity.push_back(cells[4]);
        }
    }
    return state;
}

}  // namespace caee
