#include "lssltc/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "lssltc/ops.hpp"

namespace lssltc {

void TrainConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("train: learning rate must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw std::invalid_argument("train: Adam epsilon must be positive");
    weights.validate();
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        if (!p.requires_grad()) throw std::invalid_argument("Adam: parameter does not require grad");
        m_.emplace_back(p.numel(), T(0));
        v_.emplace_back(p.numel(), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto data = params_[k].data();
        auto grad = params_[k].grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = static_cast<double>(grad[i]);
            const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * g;
            const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr_ * (mi / c1) / (std::sqrt(vi / c2) + eps_);
            data[i] = static_cast<T>(static_cast<double>(data[i]) - update);
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

template <typename T>
Tensor<T> image_tensor(const Image& image) {
    return Tensor<T>(Shape{image.channels, image.height, image.width},
                     std::vector<T>(image.data.begin(), image.data.end()));
}

template <typename T>
std::vector<PreparedSample<T>> prepare_samples(const std::vector<Sample>& samples, const LssConfig& lss,
                                               unsigned threads) {
    std::vector<PreparedSample<T>> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        const auto map = compute_lss_map(s.image, lss, threads);
        out.push_back({image_tensor<T>(s.image), image_tensor<T>(s.mask),
                       Tensor<T>(Shape{3, map.height, map.width}, std::vector<T>(map.data.begin(), map.data.end()))});
    }
    return out;
}

std::string EpochLog::to_line() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch=" << epoch << " bce_main=" << mean.bce_main << " dice_main=" << mean.dice_main
       << " bce_aux1=" << mean.bce_aux1 << " dice_aux1=" << mean.dice_aux1 << " bce_aux2=" << mean.bce_aux2
       << " dice_aux2=" << mean.dice_aux2 << " bal=" << mean.bal << " total=" << mean.total
       << " clamp_events=" << clamp_events;
    if (validation) {
        os << " val_dice=" << validation->mean_dice << " val_iou=" << validation->mean_iou
           << " val_hd95=" << validation->mean_hd95 << " val_hd95_undefined=" << validation->hd95_undefined;
    }
    return os.str();
}

namespace {

void accumulate(LossBundle& acc, const LossBundle& b) {
    acc.bce_main += b.bce_main;
    acc.dice_main += b.dice_main;
    acc.bce_aux1 += b.bce_aux1;
    acc.dice_aux1 += b.dice_aux1;
    acc.bce_aux2 += b.bce_aux2;
    acc.dice_aux2 += b.dice_aux2;
    acc.bal += b.bal;
    acc.total += b.total;
}

LossBundle scaled(LossBundle b, double f) {
    for (double* v : {&b.bce_main, &b.dice_main, &b.bce_aux1, &b.dice_aux1, &b.bce_aux2, &b.dice_aux2, &b.bal, &b.total})
        *v *= f;
    return b;
}

}  // namespace

template <typename T>
std::vector<EpochLog> train(LssLtcNet<T>& net, const std::vector<PreparedSample<T>>& data, const TrainConfig& cfg,
                            const std::vector<PreparedSample<T>>* validation,
                            const std::function<void(const EpochLog&)>& on_epoch) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    std::vector<Tensor<T>> params;
    for (auto& [name, t] : net.parameters()) params.push_back(t);
    Adam<T> opt(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    opt.zero_grad();
    auto& tape = Tape<T>::active();
    tape.reset();

    std::vector<std::size_t> order(data.size());
    std::vector<EpochLog> logs;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Pcg32 rng(cfg.shuffle_seed, epoch);
        pcg_shuffle(order, rng);
        EpochLog log;
        log.epoch = epoch;
        std::size_t step = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Tensor<T> batch_loss;
            for (std::size_t i = start; i < stop; ++i) {
                const auto& s = data[order[i]];
                const auto out = net.forward(s.image, s.lss);
                log.clamp_events += out.clamp_events;
                const Tensor<T> lss_mean = slice(s.lss, 0, 0, 1);
                LossTerms<T> terms;
                try {
                    terms = total_loss(out.main_logits, out.aux1_logits, out.aux2_logits, s.mask, lss_mean, cfg.weights);
                } catch (const std::runtime_error& e) {
                    throw std::runtime_error("train: epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                                             ": " + e.what());
                }
                accumulate(log.mean, terms.values);
                batch_loss = batch_loss.defined() ? add(batch_loss, terms.total) : terms.total;
            }
            batch_loss = scale(batch_loss, T(1) / static_cast<T>(stop - start));
            if (!std::isfinite(batch_loss.item())) {
                throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                         std::to_string(step));
            }
            backward(batch_loss);
            opt.step();
            opt.zero_grad();
            tape.reset();
        }
        log.mean = scaled(log.mean, 1.0 / static_cast<double>(data.size()));
        if (validation != nullptr && !validation->empty()) log.validation = evaluate(net, *validation).summary();
        if (on_epoch) on_epoch(log);
        logs.push_back(log);
    }
    return logs;
}

namespace {

template <typename T>
Prediction finish_prediction(const LssLtcNet<T>& net, const Tensor<T>& image, const Tensor<T>& lss) {
    NoGradGuard guard;
    const auto out = net.forward(image, lss);
    const Tensor<T> prob = sigmoid(out.main_logits);
    Prediction p;
    p.probability = Image(1, prob.dim(1), prob.dim(2));
    for (std::size_t i = 0; i < prob.numel(); ++i) p.probability.data[i] = static_cast<float>(prob.data()[i]);
    p.mask = SegMask::from_image(p.probability, 0.5f);
    p.lss = LssMap<float>(lss.dim(1), lss.dim(2));
    for (std::size_t i = 0; i < lss.numel(); ++i) p.lss.data[i] = static_cast<float>(lss.data()[i]);
    return p;
}

}  // namespace

template <typename T>
Prediction predict(const LssLtcNet<T>& net, const Image& image, unsigned threads) {
    const auto& cfg = net.config();
    if (image.channels != 3 || image.height != cfg.input_h || image.width != cfg.input_w) {
        throw std::invalid_argument("predict: image " + std::to_string(image.channels) + "x" +
                                    std::to_string(image.height) + "x" + std::to_string(image.width) +
                                    " does not match the checkpoint input 3x" + std::to_string(cfg.input_h) + "x" +
                                    std::to_string(cfg.input_w));
    }
    const auto map = compute_lss_map(image, cfg.lss, threads);
    const Tensor<T> lss(Shape{3, map.height, map.width}, std::vector<T>(map.data.begin(), map.data.end()));
    return finish_prediction(net, image_tensor<T>(image), lss);
}

template <typename T>
Prediction predict(const LssLtcNet<T>& net, const PreparedSample<T>& sample) {
    return finish_prediction(net, sample.image, sample.lss);
}

template <typename T>
MetricReport evaluate(const LssLtcNet<T>& net, const std::vector<PreparedSample<T>>& data) {
    MetricReport report;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto p = predict(net, data[i]);
        Image gt(1, data[i].mask.dim(1), data[i].mask.dim(2));
        for (std::size_t k = 0; k < gt.data.size(); ++k) gt.data[k] = static_cast<float>(data[i].mask.data()[k]);
        report.add("sample_" + std::to_string(i), p.mask, SegMask::from_image(gt));
    }
    return report;
}

namespace {

nlohmann::json network_to_json(const NetworkConfig& c) {
    return {{"input_h", c.input_h},
            {"input_w", c.input_w},
            {"encoder_channels", c.encoder_channels},
            {"stem_channels", c.stem_channels},
            {"ltc_hidden", c.ltc_hidden},
            {"steps", c.steps},
            {"dt", c.dt},
            {"use_lss", c.use_lss},
            {"lss_patch", c.lss.patch_size},
            {"lss_radius", c.lss.search_radius},
            {"lss_epsilon", c.lss.epsilon},
            {"seed", c.seed}};
}

NetworkConfig network_from_json(const nlohmann::json& j) {
    NetworkConfig c;
    c.input_h = j.at("input_h").get<std::size_t>();
    c.input_w = j.at("input_w").get<std::size_t>();
    c.encoder_channels = j.at("encoder_channels").get<std::vector<std::size_t>>();
    c.stem_channels = j.at("stem_channels").get<std::size_t>();
    c.ltc_hidden = j.at("ltc_hidden").get<std::size_t>();
    c.steps = j.at("steps").get<std::size_t>();
    c.dt = j.at("dt").get<double>();
    c.use_lss = j.at("use_lss").get<bool>();
    c.lss.patch_size = j.at("lss_patch").get<std::size_t>();
    c.lss.search_radius = j.at("lss_radius").get<std::size_t>();
    c.lss.epsilon = j.at("lss_epsilon").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const LssLtcNet<T>& net, const std::string& config_echo) {
    nlohmann::json header;
    header["network"] = network_to_json(net.config());
    header["config"] = config_echo;
    header["manifest"] = nlohmann::json::array();
    std::vector<std::uint8_t> payload;
    std::size_t offset = 0;
    for (const auto& [name, t] : net.parameters()) {
        header["manifest"].push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        for (T v : t.data()) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            for (int i = 0; i < 4; ++i) payload.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
        }
        offset += t.numel();
    }
    const std::string text = header.dump();
    std::vector<std::uint8_t> bytes{'L', 'T', 'C', 'K', kCheckpointVersion};
    const auto len = static_cast<std::uint32_t>(text.size());
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(len >> (8 * i)));
    bytes.insert(bytes.end(), text.begin(), text.end());
    bytes.insert(bytes.end(), payload.begin(), payload.end());
    write_file(path, bytes);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 9 || std::memcmp(bytes.data(), "LTCK", 4) != 0) throw ParseError("checkpoint: bad magic", 0);
    if (bytes[4] != kCheckpointVersion) throw ParseError("checkpoint: unsupported version", 4);
    std::uint32_t len = 0;
    for (int i = 0; i < 4; ++i) len |= static_cast<std::uint32_t>(bytes[5 + i]) << (8 * i);
    if (bytes.size() < 9 + static_cast<std::size_t>(len)) throw ParseError("checkpoint: truncated header", bytes.size());
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 9, bytes.begin() + 9 + len);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad header: ") + e.what(), 9);
    }
    Checkpoint ckpt;
    ckpt.network = network_from_json(header.at("network"));
    ckpt.config_echo = header.value("config", std::string{});
    const std::size_t base = 9 + len;
    const std::size_t floats = (bytes.size() - base) / 4;
    for (const auto& entry : header.at("manifest")) {
        const auto shape = entry.at("shape").get<Shape>();
        const auto off = entry.at("offset").get<std::size_t>();
        const std::size_t n = shape_numel(shape);
        if (off + n > floats) {
            throw ParseError("checkpoint: tensor " + entry.at("name").get<std::string>() + " out of range",
                             bytes.size());
        }
        std::vector<float> values(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[base + 4 * (off + i) + b]) << (8 * b);
            values[i] = std::bit_cast<float>(bits);
        }
        ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(values));
    }
    return ckpt;
}

template <typename T>
LssLtcNet<T> load_network(const Checkpoint& ckpt) {
    LssLtcNet<T> net(ckpt.network);
    auto params = net.parameters();
    if (params.size() != ckpt.tensors.size()) {
        throw std::invalid_argument("checkpoint: holds " + std::to_string(ckpt.tensors.size()) + " tensors, network has " +
                                    std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& [name, t] = params[k];
        const auto& [cname, values] = ckpt.tensors[k];
        if (name != cname || values.size() != t.numel()) {
            throw std::invalid_argument("checkpoint: tensor " + cname + " does not match network parameter " + name);
        }
        auto dst = t.data();
        for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
    }
    return net;
}

#define LSSLTC_INSTANTIATE_TRAIN(T)                                                                          \
    template class Adam<T>;                                                                                  \
    template Tensor<T> image_tensor(const Image&);                                                           \
    template std::vector<PreparedSample<T>> prepare_samples(const std::vector<Sample>&, const LssConfig&,    \
                                                            unsigned);                                       \
    template std::vector<EpochLog> train(LssLtcNet<T>&, const std::vector<PreparedSample<T>>&,               \
                                         const TrainConfig&, const std::vector<PreparedSample<T>>*,          \
                                         const std::function<void(const EpochLog&)>&);                       \
    template Prediction predict(const LssLtcNet<T>&, const Image&, unsigned);                                \
    template Prediction predict(const LssLtcNet<T>&, const PreparedSample<T>&);                              \
    template MetricReport evaluate(const LssLtcNet<T>&, const std::vector<PreparedSample<T>>&);              \
    template void save_checkpoint(const std::filesystem::path&, const LssLtcNet<T>&, const std::string&);    \
    template LssLtcNet<T> load_network(const Checkpoint&);

LSSLTC_INSTANTIATE_TRAIN(float)
LSSLTC_INSTANTIATE_TRAIN(double)

#undef LSSLTC_INSTANTIATE_TRAIN

}  // namespace lssltc
