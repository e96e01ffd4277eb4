// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Optional arguments select criteria by
// number, e.g. `acceptance 2 5`.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "lssltc/gradcheck.hpp"
#include "lssltc/lssf.hpp"
#include "lssltc/ltc.hpp"
#include "lssltc/ops.hpp"
#include "lssltc/train.hpp"

using namespace lssltc;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(LSSLTC_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return -1;
    std::string out;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int status = pclose(pipe);
    if (output) *output = out;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Only the epoch lines of a training log; the config echo is excluded.
std::string loss_trace(const fs::path& log) {
    std::istringstream in(slurp(log));
    std::string trace;
    for (std::string line; std::getline(in, line);)
        if (line.rfind("epoch=", 0) == 0) trace += line + "\n";
    return trace;
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const auto report = run_gradcheck(64, 1);
    const double secs = seconds_since(t0);
    bool network = false, rollout = false, bce = false, dice = false;
    for (const auto& c : report.cases) {
        network |= c.name == "network_total_loss";
        rollout |= c.name == "ltc_rollout_T4";
        bce |= c.name == "bce_loss";
        dice |= c.name == "dice_loss";
    }
    const bool pass = report.passed() && report.max_rel_error() < 1e-5 && secs < 120 && network && rollout && bce && dice;
    return {pass, "cases=" + std::to_string(report.cases.size()) + " coords=" + std::to_string(report.coordinates()) +
                      " max_rel_err=" + fmt(report.max_rel_error()) + " time=" + fmt(secs) + "s"};
}

Outcome lss_invariance() {
    SynthConfig sc;
    sc.count = 20;
    sc.size = 64;
    sc.seed = 101;
    const auto samples = generate_synthetic(sc);
    const LssConfig cfg;
    Pcg32 rng(2024, 7);
    double worst = 0;
    for (const auto& s : samples) {
        const auto img = s.image.cast<double>();
        const auto base = compute_lss_map(img, cfg);
        for (int j = 0; j < 10; ++j) {
            const double a = rng.uniform(0.5, 2.0), b = rng.uniform(-0.2, 0.2);
            auto jittered = img;
            for (auto& v : jittered.data) v = a * v + b;
            worst = std::max(worst, testing_support::max_abs_diff(base.data, compute_lss_map(jittered, cfg).data));
        }
    }
    double uniform_worst = 0;
    for (double level : {0.0, 0.3, 1.0}) {
        const auto map = compute_lss_map(ImageT<double>(3, 32, 32, level), cfg);
        for (double v : map.data) uniform_worst = std::max(uniform_worst, std::abs(v));
    }
    return {worst < 1e-5 && uniform_worst < 1e-6,
            "jitter max_abs=" + fmt(worst) + " uniform max_abs=" + fmt(uniform_worst)};
}

Outcome lss_oracle_match() {
    Pcg32 rng(33, 1);
    double worst = 0;
    for (int i = 0; i < 20; ++i) {
        const std::size_t h = 12 + rng.bounded(21), w = 12 + rng.bounded(21);
        const auto img = testing_support::random_image(rng, i % 4 == 0 ? 1 : 3, h, w);
        const LssConfig cfg;
        worst = std::max(worst, testing_support::max_abs_diff(compute_lss_map(img, cfg).data,
                                                               testing_support::lss_oracle(img, cfg).data));
    }
    return {worst <= 1e-12, "20 images max_abs=" + fmt(worst)};
}

Outcome ltc_properties() {
    using Td = Tensor<double>;
    Pcg32 rng(404, 4);
    auto rand_t = [&](Shape s, double scale) {
        Td t(std::move(s));
        for (auto& v : t.data()) v = rng.uniform(-scale, scale);
        return t;
    };
    double min_tau = 1e300;
    for (int i = 0; i < 1000; ++i) {
        LtcParams<double> p = LtcParams<double>::init(8, 5, rng);
        p.w_tau = rand_t({8, 5}, 20.0);
        const auto tau = ltc_tau(rand_t({5}, 20.0), p);
        for (double v : tau.data()) min_tau = std::min(min_tau, v);
    }

    double fixed_err = 0;
    for (int i = 0; i < 50; ++i) {
        LtcParams<double> p = LtcParams<double>::init(8, 5, rng);
        const auto x = rand_t({5}, 1.0);
        Td h0(Shape{8});
        for (auto& v : h0.data()) v = rng.uniform(0.05, 1.0);
        const auto drive = add(matmul(p.w_h, h0), matmul(p.w_in, x));
        for (std::size_t k = 0; k < 8; ++k) p.b.data()[k] = h0.data()[k] - drive.data()[k];
        const auto r = euler_rollout(h0, x, p, RolloutConfig{4, rng.uniform(0.1, 3.0)});
        for (std::size_t k = 0; k < 8; ++k) fixed_err = std::max(fixed_err, std::abs(r.final_state.data()[k] - h0.data()[k]));
    }

    std::size_t violations = 0, clamps = 0;
    for (int i = 0; i < 200; ++i) {
        LtcParams<double> p;
        p.w_h = rand_t({6, 6}, 0.4);
        p.w_in = rand_t({6, 4}, 1.0);
        p.w_tau = rand_t({6, 4}, 4.0);
        p.b = rand_t({6}, 0.5);
        const auto x = rand_t({4}, 1.0);
        const auto r = euler_rollout(rand_t({6}, 1.0), x, p, RolloutConfig{4, rng.uniform(0.5, 4.0)});
        clamps += r.clamp_events;
        for (std::size_t t = 1; t < r.trajectory.size(); ++t) {
            const auto& prev = r.trajectory[t - 1];
            const auto f = relu(add(add(matmul(p.w_h, prev), matmul(p.w_in, x)), p.b));
            for (std::size_t k = 0; k < 6; ++k) {
                const double lo = std::min(prev.data()[k], f.data()[k]), hi = std::max(prev.data()[k], f.data()[k]);
                const double v = r.trajectory[t].data()[k];
                if (v < lo - 1e-12 || v > hi + 1e-12) ++violations;
            }
        }
    }
    return {min_tau > 0 && fixed_err <= 1e-6 && violations == 0,
            "min_tau=" + fmt(min_tau) + " fixed_point_err=" + fmt(fixed_err) + " bound_violations=" +
                std::to_string(violations) + " clamp_events=" + std::to_string(clamps)};
}

Outcome metric_oracles() {
    Pcg32 rng(55, 5);
    auto random_mask = [&]() {
        SegMask m(32, 32);
        const std::uint32_t mode = rng.bounded(3);
        if (mode == 0) {
            const double density = rng.uniform(0.02, 0.6);
            for (auto& v : m.bits) v = rng.uniform() < density;
        } else {
            const std::uint32_t n = 1 + rng.bounded(3);
            for (std::uint32_t k = 0; k < n; ++k) {
                const double cy = rng.uniform(0, 32), cx = rng.uniform(0, 32), ry = rng.uniform(1, 12),
                             rx = rng.uniform(1, 12);
                for (std::size_t y = 0; y < 32; ++y)
                    for (std::size_t x = 0; x < 32; ++x)
                        if (std::pow((y - cy) / ry, 2) + std::pow((x - cx) / rx, 2) <= 1) m.at(y, x) = 1;
            }
        }
        return m;
    };
    std::size_t mismatches = 0, undefined = 0;
    double identity_err = 0;
    for (int i = 0; i < 200; ++i) {
        const auto p = random_mask(), g = random_mask();
        const auto fast = hd95(p, g), slow = hd95_oracle(p, g);
        if (fast.has_value() != slow.has_value() || (fast && *fast != *slow)) ++mismatches;
        if (!fast) ++undefined;
        const double iou = iou_score(p, g);
        identity_err = std::max(identity_err, std::abs(dice_score(p, g) - 2 * iou / (1 + iou)));
    }
    std::size_t shift_fail = 0;
    for (std::size_t k = 1; k <= 5; ++k) {
        SegMask a(32, 32), b(32, 32);
        for (std::size_t y = 8; y < 18; ++y)
            for (std::size_t x = 6; x < 16; ++x) {
                a.at(y, x) = 1;
                b.at(y, x + k) = 1;
            }
        const auto d = hd95(a, b);
        if (!d || *d != static_cast<double>(k)) ++shift_fail;
    }
    return {mismatches == 0 && identity_err <= 1e-9 && shift_fail == 0,
            "hd95 mismatches=" + std::to_string(mismatches) + "/200 dice_iou_err=" + fmt(identity_err) +
                " shift_failures=" + std::to_string(shift_fail)};
}

Outcome loss_arithmetic() {
    using Td = Tensor<double>;
    const LossWeights paper;
    const LossBundle ones{1, 1, 1, 1, 1, 1, 1, 0};
    const double unit_total = LossBundle::weighted_total(ones, paper);

    Pcg32 rng(66, 6);
    double worst = 0;
    for (int trial = 0; trial < 10; ++trial) {
        Td main(Shape{1, 16, 16}), a1(Shape{1, 1, 1}), a2(Shape{1, 2, 2}), target(Shape{1, 16, 16}), lss(Shape{1, 16, 16});
        for (auto* t : {&main, &a1, &a2}) for (auto& v : t->data()) v = rng.uniform(-4, 4);
        for (auto& v : lss.data()) v = rng.uniform(-0.3, 1.0);
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) target.data()[y * 16 + x] = (y >= 3 && y < 13 && x >= 4 && x < 12);
        const auto terms = total_loss(main, a1, a2, target, lss, paper);
        const auto& v = terms.values;

        auto sig = [](double z) { return 1 / (1 + std::exp(-z)); };
        auto bce = [&](const Td& z, const Td& t) {
            double s = 0;
            for (std::size_t i = 0; i < z.numel(); ++i)
                s -= t.data()[i] * std::log(sig(z.data()[i])) + (1 - t.data()[i]) * std::log(1 - sig(z.data()[i]));
            return s / static_cast<double>(z.numel());
        };
        auto dice = [&](const Td& z, const Td& t) {
            double pt = 0, ps = 0, ts = 0;
            for (std::size_t i = 0; i < z.numel(); ++i) {
                pt += sig(z.data()[i]) * t.data()[i];
                ps += sig(z.data()[i]);
                ts += t.data()[i];
            }
            return 1 - (2 * pt + 1) / (ps + ts + 1);
        };
        auto pool = [&](std::size_t out) {
            Td t(Shape{1, out, out});
            const std::size_t f = 16 / out;
            for (std::size_t y = 0; y < out; ++y)
                for (std::size_t x = 0; x < out; ++x) {
                    double s = 0;
                    for (std::size_t dy = 0; dy < f; ++dy)
                        for (std::size_t dx = 0; dx < f; ++dx) s += target.data()[(y * f + dy) * 16 + x * f + dx];
                    t.data()[y * out + x] = s / static_cast<double>(f * f) >= 0.5;
                }
            return t;
        };
        auto bal = [&]() {
            auto sobel = [](const std::vector<double>& f, std::vector<double>& gx, std::vector<double>& gy) {
                for (long y = 0; y < 16; ++y)
                    for (long x = 0; x < 16; ++x) {
                        auto at = [&](long dy, long dx) { return f[reflect_index(y + dy, 16) * 16 + reflect_index(x + dx, 16)]; };
                        gx[y * 16 + x] = at(-1, 1) + 2 * at(0, 1) + at(1, 1) - at(-1, -1) - 2 * at(0, -1) - at(1, -1);
                        gy[y * 16 + x] = at(1, -1) + 2 * at(1, 0) + at(1, 1) - at(-1, -1) - 2 * at(-1, 0) - at(-1, 1);
                    }
            };
            std::vector<double> p(256), m(lss.data().begin(), lss.data().end()), px(256), py(256), mx(256), my(256);
            for (std::size_t i = 0; i < 256; ++i) p[i] = sig(main.data()[i]);
            sobel(p, px, py);
            sobel(m, mx, my);
            double s = 0;
            for (std::size_t i = 0; i < 256; ++i) s += std::pow(px[i] - mx[i], 2) + std::pow(py[i] - my[i], 2);
            return s / 512.0;
        };
        const auto t1 = pool(1), t2 = pool(2);
        LossBundle hand{bce(main, target), dice(main, target), bce(a1, t1), dice(a1, t1), bce(a2, t2), dice(a2, t2), bal(), 0};
        hand.total = 1.0 * (hand.bce_main + hand.dice_main) + 0.4 * (hand.bce_aux1 + hand.dice_aux1) +
                     0.2 * (hand.bce_aux2 + hand.dice_aux2) + 0.5 * hand.bal;
        for (auto [x, y] : {std::pair{v.bce_main, hand.bce_main}, {v.dice_main, hand.dice_main}, {v.bce_aux1, hand.bce_aux1},
                            {v.dice_aux1, hand.dice_aux1}, {v.bce_aux2, hand.bce_aux2}, {v.dice_aux2, hand.dice_aux2},
                            {v.bal, hand.bal}, {v.total, hand.total}})
            worst = std::max(worst, std::abs(x - y));
    }
    return {worst <= 1e-9 && std::abs(unit_total - 3.7) <= 1e-12,
            "bundle max_abs_err=" + fmt(worst) + " unit_total=" + fmt(unit_total)};
}

Outcome end_to_end_training() {
    const auto t0 = Clock::now();
    SynthConfig train_cfg;
    train_cfg.count = 200;
    train_cfg.size = 64;
    train_cfg.seed = 1;
    SynthConfig val_cfg = train_cfg;
    val_cfg.count = 50;
    val_cfg.seed = 2;
    const NetworkConfig net_cfg;
    const auto train_set = prepare_samples<float>(generate_synthetic(train_cfg), net_cfg.lss);
    const auto val_set = prepare_samples<float>(generate_synthetic(val_cfg), net_cfg.lss);
    LssLtcNet<float> net(net_cfg);
    TrainConfig tc;
    tc.epochs = 30;
    tc.batch_size = 2;
    tc.lr = 1e-3;
    train(net, train_set, tc);
    const auto s = evaluate(net, val_set).summary();
    const double secs = seconds_since(t0);
    return {s.mean_dice >= 0.85 && s.mean_hd95 <= 4.0 && s.hd95_undefined == 0 && secs < 900,
            "held-out dice=" + fmt(s.mean_dice) + " iou=" + fmt(s.mean_iou) + " hd95=" + fmt(s.mean_hd95) +
                " undefined=" + std::to_string(s.hd95_undefined) + " time=" + fmt(secs) + "s"};
}

Outcome ablation_mechanics(const fs::path& work) {
    const std::string data = (work / "abl_train").string(), val = (work / "abl_val").string();
    const std::string ini = (work / "abl.ini").string();
    std::ofstream(ini) << "[network]\ninput_h = 32\ninput_w = 32\nencoder_channels = 8, 12, 16, 16\n"
                          "stem_channels = 8\nltc_hidden = 16\n\n[train]\nepochs = 2\n";
    if (run_cli("synth generate --count 8 --size 32 --seed 31 --out " + data) != 0 ||
        run_cli("synth generate --count 4 --size 32 --seed 32 --out " + val) != 0)
        return {false, "dataset generation failed"};
    const std::pair<const char*, const char*> variants[] = {
        {"full", ""}, {"lss_off", "--no-lss"}, {"ltc_off", "--steps 0"}, {"bal_off", "--lambda-b 0"}};
    std::string detail;
    bool ok = true;
    for (const auto& [name, flag] : variants) {
        const auto ckpt = work / (std::string(name) + ".ckpt");
        const int code = run_cli("train --data " + data + " --val " + val + " --config " + ini + " " + flag +
                                 " --out " + ckpt.string());
        const fs::path report = ckpt.string() + ".val.json";
        const auto trace = loss_trace(ckpt.string() + ".log");
        const auto epochs = std::count(trace.begin(), trace.end(), '\n');
        const bool run_ok = code == 0 && fs::exists(ckpt) && fs::exists(report) && epochs == 2 &&
                            slurp(report).find("mean_dice") != std::string::npos;
        ok &= run_ok;
        detail += std::string(name) + "=" + (run_ok ? "ok" : "fail") + " ";
    }

    NetworkConfig cfg;
    cfg.input_h = cfg.input_w = 32;
    LssLtcNet<double> fused(cfg);
    fused.zero_lss_projection();
    cfg.use_lss = false;
    const LssLtcNet<double> plain(cfg);
    Pcg32 rng(8, 8);
    Tensor<double> image(Shape{3, 32, 32}), lss(Shape{3, 32, 32});
    for (auto& v : image.data()) v = rng.uniform();
    for (auto& v : lss.data()) v = rng.uniform(-1, 1);
    const auto a = fused.forward(image, lss), b = plain.forward(image, lss);
    const bool identity = std::equal(a.main_logits.data().begin(), a.main_logits.data().end(), b.main_logits.data().begin()) &&
                          std::equal(a.aux1_logits.data().begin(), a.aux1_logits.data().end(), b.aux1_logits.data().begin()) &&
                          std::equal(a.aux2_logits.data().begin(), a.aux2_logits.data().end(), b.aux2_logits.data().begin());
    detail += std::string("zero_projection_identity=") + (identity ? "exact" : "differs");
    return {ok && identity, detail};
}

Outcome determinism(const fs::path& work) {
    bool ok = true;
    std::string detail;
    for (const char* run : {"a", "b"}) {
        const auto dir = work / (std::string("det_") + run);
        ok &= run_cli("--threads 1 synth generate --count 6 --size 64 --seed 77 --out " + (dir / "data").string()) == 0;
        ok &= run_cli("--threads 1 lss extract --input " + (dir / "data" / "img_00001.ppm").string() + " --out " +
                      (dir / "map.lssf").string()) == 0;
        ok &= run_cli("--threads 1 train --data " + (dir / "data").string() + " --epochs 2 --batch 2 --out " +
                      (dir / "m.ckpt").string()) == 0;
    }
    if (!ok) return {false, "a command failed"};
    const auto a = work / "det_a", b = work / "det_b";
    bool data_same = true;
    for (const auto& entry : fs::directory_iterator(a / "data"))
        data_same &= slurp(entry.path()) == slurp(b / "data" / entry.path().filename());
    const bool lss_same = slurp(a / "map.lssf") == slurp(b / "map.lssf");
    const auto trace = loss_trace(a / "m.ckpt.log");
    const bool trace_same = !trace.empty() && trace == loss_trace(b / "m.ckpt.log");
    const bool ckpt_same = slurp(a / "m.ckpt") == slurp(b / "m.ckpt");
    detail = std::string("datasets=") + (data_same ? "identical" : "differ") + " lss=" + (lss_same ? "identical" : "differ") +
             " loss_trace=" + (trace_same ? "identical" : "differ") + " checkpoint=" + (ckpt_same ? "identical" : "differ");
    return {data_same && lss_same && trace_same && ckpt_same, detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    const fs::path work = testing_support::scratch_dir("acceptance");

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient suite (64-bit)", gradient_suite},
        {"LSS affine invariance", lss_invariance},
        {"LSS oracle equality", lss_oracle_match},
        {"LTC properties", ltc_properties},
        {"metric oracles", metric_oracles},
        {"loss arithmetic", loss_arithmetic},
        {"end-to-end toy training", end_to_end_training},
        {"ablation mechanics", [&] { return ablation_mechanics(work); }},
        {"determinism", [&] { return determinism(work); }},
    };

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << criteria[i].first << ": "
                  << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
