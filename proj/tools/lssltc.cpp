#include <cstdio>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "lssltc/config.hpp"
#include "lssltc/gradcheck.hpp"
#include "lssltc/image.hpp"
#include "lssltc/lss.hpp"
#include "lssltc/lssf.hpp"
#include "lssltc/metrics.hpp"
#include "lssltc/ops.hpp"
#include "lssltc/synth.hpp"
#include "lssltc/train.hpp"

namespace fs = std::filesystem;
using namespace lssltc;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kUsage = 2;

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string lss_echo(const LssConfig& c) {
    std::ostringstream os;
    os << "K=" << c.patch_size << " R=" << c.search_radius << " eps=" << c.epsilon;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::string commented(const std::string& text) {
    std::istringstream is(text);
    std::ostringstream os;
    for (std::string line; std::getline(is, line);) os << "# " << line << '\n';
    return os.str();
}

// img_00012.ppm -> 00012, anything else -> stem
std::string sample_key(const fs::path& p) {
    std::string stem = p.stem().string();
    for (const char* prefix : {"img_", "msk_"})
        if (stem.rfind(prefix, 0) == 0) return stem.substr(4);
    return stem;
}

struct LssArgs {
    std::string input, out, export_dir;
    std::size_t patch = 5, radius = 5;
};

int run_lss_extract(const LssArgs& a, unsigned threads) {
    LssConfig cfg;
    cfg.patch_size = a.patch;
    cfg.search_radius = a.radius;
    cfg.validate();
    const auto image = read_image(a.input).cast<double>();
    const auto map = compute_lss_map(image, cfg, threads);
    write_lssf(a.out, map.as_planes().cast<float>());
    const std::string echo = lss_echo(cfg);
    std::cout << "lss " << echo << " input=" << a.input << " size=" << map.height << "x" << map.width
              << " out=" << a.out << '\n';
    if (!a.export_dir.empty()) {
        export_explainability(map, a.export_dir, echo);
        std::cout << "exported lss_mean.pgm lss_max.pgm lss_std.pgm to " << a.export_dir << '\n';
    }
    return kOk;
}

struct SynthArgs {
    std::string out, config;
    std::size_t count = 16, size = 64;
    std::uint64_t seed = 1;
};

int run_synth(const SynthArgs& a, const CLI::App& cmd, unsigned threads) {
    RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
    if (cmd.count("--count")) rc.synth.count = a.count;
    if (cmd.count("--size")) rc.synth.size = a.size;
    if (cmd.count("--seed")) rc.synth.seed = a.seed;
    rc.synth.validate();
    const auto samples = generate_synthetic(rc.synth, threads);
    write_dataset(a.out, samples, rc.synth);
    std::cout << "synth count=" << rc.synth.count << " size=" << rc.synth.size << " seed=" << rc.synth.seed
              << " out=" << a.out << '\n';
    return kOk;
}

struct TrainArgs {
    std::string data, config, out, val, log;
    std::size_t epochs = 30, batch = 2, steps = 4;
    double lr = 1e-3, lambda_b = 0.5;
    std::uint64_t seed = 7;
    bool no_lss = false;
};

std::vector<Sample> load_split(const std::string& dir, const NetworkConfig& net) {
    auto samples = read_dataset(dir);
    if (samples.empty()) throw IoError("no img_*.ppm samples found in " + dir);
    for (const auto& s : samples) {
        if (s.image.height != net.input_h || s.image.width != net.input_w) {
            throw ConfigError("dataset " + dir + " holds " + std::to_string(s.image.height) + "x" +
                              std::to_string(s.image.width) + " images but the network expects " +
                              std::to_string(net.input_h) + "x" + std::to_string(net.input_w));
        }
    }
    return samples;
}

int run_train(const TrainArgs& a, const CLI::App& cmd, unsigned threads) {
    RunConfig rc = a.config.empty() ? RunConfig{} : RunConfig::load(a.config);
    if (cmd.count("--epochs")) rc.train.epochs = a.epochs;
    if (cmd.count("--batch")) rc.train.batch_size = a.batch;
    if (cmd.count("--lr")) rc.train.lr = a.lr;
    if (cmd.count("--steps")) rc.network.steps = a.steps;
    if (cmd.count("--lambda-b")) rc.train.weights.boundary = a.lambda_b;
    if (cmd.count("--seed")) rc.network.seed = a.seed;
    if (a.no_lss) rc.network.use_lss = false;
    rc.validate();

    const auto train_samples = load_split(a.data, rc.network);
    std::vector<PreparedSample<float>> val;
    if (!a.val.empty()) val = prepare_samples<float>(load_split(a.val, rc.network), rc.network.lss, threads);
    const auto data = prepare_samples<float>(train_samples, rc.network.lss, threads);

    const std::string echo = rc.to_text();
    const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log") : fs::path(a.log);
    std::string log_text = commented(echo);
    std::cout << log_text;
    LssLtcNet<float> net(rc.network);
    try {
        train(net, data, rc.train, val.empty() ? nullptr : &val, [&](const EpochLog& e) {
            const auto line = e.to_line();
            std::cout << line << std::endl;
            log_text += line + '\n';
        });
    } catch (const std::runtime_error& e) {
        write_text(log_path, log_text + "# aborted: " + e.what() + '\n');
        throw CheckFailure(e.what());
    }
    write_text(log_path, log_text);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    save_checkpoint(a.out, net, echo);
    if (!val.empty()) {
        const auto report = evaluate(net, val);
        write_text(a.out + ".val.json", report.to_json(echo));
        write_text(a.out + ".val.txt", commented(echo) + report.to_text());
    }
    std::cout << "checkpoint " << a.out << " log " << log_path.string() << '\n';
    return kOk;
}

struct InferArgs {
    std::string ckpt, input, out;
};

int run_infer(const InferArgs& a, unsigned threads) {
    const auto ckpt = read_checkpoint(a.ckpt);
    const auto net = load_network<float>(ckpt);
    std::vector<fs::path> inputs;
    if (fs::is_directory(a.input)) {
        for (const auto& e : fs::directory_iterator(a.input)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() == ".ppm" && name.rfind("img_", 0) == 0) inputs.push_back(e.path());
        }
        std::sort(inputs.begin(), inputs.end());
        if (inputs.empty()) throw IoError("no img_*.ppm inputs found in " + a.input);
    } else {
        inputs.emplace_back(a.input);
    }
    fs::create_directories(a.out);
    const std::string echo = ckpt.config_echo;
    const std::string comment = "checkpoint " + a.ckpt;
    std::string manifest = commented(echo);
    for (const auto& in : inputs) {
        const auto image = read_image(in);
        const auto p = predict(net, image, threads);
        const std::string key = sample_key(in);
        const fs::path mask_path = fs::path(a.out) / ("msk_" + key + ".pgm");
        write_image(mask_path, p.mask.to_image(), comment);
        write_image(fs::path(a.out) / ("prob_" + key + ".pgm"), p.probability, comment);
        export_explainability(p.lss, fs::path(a.out) / ("lss_" + key), lss_echo(ckpt.network.lss));
        manifest += in.string() + " -> " + mask_path.filename().string() + " foreground=" +
                    std::to_string(p.mask.count()) + '\n';
        std::cout << "infer " << in.string() << " -> " << mask_path.string() << '\n';
    }
    write_text(fs::path(a.out) / "manifest", manifest);
    return kOk;
}

struct EvalArgs {
    std::string pred, gt, report;
};

int run_eval(const EvalArgs& a) {
    std::map<std::string, fs::path> preds;
    for (const auto& e : fs::directory_iterator(a.pred)) {
        const auto name = e.path().filename().string();
        if (e.path().extension() == ".pgm" && name.rfind("msk_", 0) == 0) preds[sample_key(e.path())] = e.path();
    }
    std::vector<fs::path> gts;
    for (const auto& e : fs::directory_iterator(a.gt)) {
        const auto name = e.path().filename().string();
        if (e.path().extension() == ".pgm" && name.rfind("msk_", 0) == 0) gts.push_back(e.path());
    }
    std::sort(gts.begin(), gts.end());
    if (gts.empty()) throw IoError("no msk_*.pgm ground-truth masks found in " + a.gt);
    MetricReport report;
    for (const auto& g : gts) {
        const auto it = preds.find(sample_key(g));
        if (it == preds.end()) throw IoError("no prediction for " + g.filename().string() + " in " + a.pred);
        report.add(g.filename().string(), SegMask::from_image(read_image(it->second)),
                   SegMask::from_image(read_image(g)));
    }
    const std::string echo = "pred = " + a.pred + "\ngt = " + a.gt + "\n";
    fs::path txt = a.report;
    txt.replace_extension(".txt");
    if (txt == fs::path(a.report)) txt += ".txt";
    write_text(a.report, report.to_json(echo));
    write_text(txt, commented(echo) + report.to_text());
    std::cout << report.to_text();
    return kOk;
}

int run_gradcheck_cmd(int bits, std::uint64_t seed) {
    const auto report = run_gradcheck(bits, seed);
    std::cout << report.to_text();
    return report.passed() ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Local structural similarity and liquid time-constant segmentation toolkit"};
    app.require_subcommand(1);
    unsigned threads = 1;
    app.add_option("--threads", threads, "Worker threads; 1 gives bit-reproducible results")
        ->check(CLI::Range(1u, 256u))
        ->capture_default_str();

    auto* lss = app.add_subcommand("lss", "Local structural similarity maps");
    lss->require_subcommand(1);
    LssArgs lss_args;
    auto* extract = lss->add_subcommand("extract", "Compute the 3-channel map of an image");
    extract->add_option("--input", lss_args.input, "Input PPM/PGM image")->required();
    extract->add_option("--out", lss_args.out, "Output LSSF file")->required();
    extract->add_option("--patch", lss_args.patch, "Patch size K (odd)")->capture_default_str();
    extract->add_option("--radius", lss_args.radius, "Search radius R")->capture_default_str();
    extract->add_option("--export-png", lss_args.export_dir, "Directory for grayscale mean/max/std channel exports");

    auto* synth = app.add_subcommand("synth", "Synthetic wound datasets");
    synth->require_subcommand(1);
    SynthArgs synth_args;
    auto* generate = synth->add_subcommand("generate", "Write a seeded synthetic dataset");
    generate->add_option("--count", synth_args.count, "Number of samples")->capture_default_str();
    generate->add_option("--size", synth_args.size, "Image side in pixels (>= 32)")->capture_default_str();
    generate->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
    generate->add_option("--config", synth_args.config, "Config file; its [synth] section is used");
    generate->add_option("--out", synth_args.out, "Output directory")->required();

    auto* train_cmd = app.add_subcommand("train", "Train the toy network");
    TrainArgs train_args;
    train_cmd->add_option("--data", train_args.data, "Training dataset directory")->required();
    train_cmd->add_option("--config", train_args.config, "Config file (flags override it)");
    train_cmd->add_option("--out", train_args.out, "Output checkpoint path")->required();
    train_cmd->add_option("--epochs", train_args.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--batch", train_args.batch, "Batch size")->capture_default_str();
    train_cmd->add_option("--lr", train_args.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--seed", train_args.seed, "Network initialization seed")->capture_default_str();
    train_cmd->add_option("--val", train_args.val, "Validation dataset directory");
    train_cmd->add_option("--log", train_args.log, "Training log path (default <out>.log)");
    train_cmd->add_flag("--no-lss", train_args.no_lss, "Disable LSS fusion");
    train_cmd->add_option("--steps", train_args.steps, "LTC refinement steps; 0 gives a zero token")
        ->capture_default_str();
    train_cmd->add_option("--lambda-b", train_args.lambda_b, "Boundary alignment weight; 0 disables it")
        ->capture_default_str();

    auto* infer = app.add_subcommand("infer", "Predict masks with a checkpoint");
    InferArgs infer_args;
    infer->add_option("--ckpt", infer_args.ckpt, "Checkpoint file")->required();
    infer->add_option("--input", infer_args.input, "Input image or directory of img_*.ppm")->required();
    infer->add_option("--out", infer_args.out, "Output directory")->required();

    auto* eval = app.add_subcommand("eval", "Score predicted masks against ground truth");
    EvalArgs eval_args;
    eval->add_option("--pred", eval_args.pred, "Directory of predicted msk_*.pgm")->required();
    eval->add_option("--gt", eval_args.gt, "Directory of ground-truth msk_*.pgm")->required();
    eval->add_option("--report", eval_args.report, "JSON report path; a .txt table is written beside it")
        ->required();

    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    int bits = 64;
    std::uint64_t grad_seed = 1;
    grad->add_option("--bits", bits, "Precision: 32 or 64")->check(CLI::IsMember({32, 64}))->capture_default_str();
    grad->add_option("--seed", grad_seed, "Sampling seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    set_compute_threads(static_cast<int>(threads));
    try {
        if (extract->parsed()) return run_lss_extract(lss_args, threads);
        if (generate->parsed()) return run_synth(synth_args, *generate, threads);
        if (train_cmd->parsed()) return run_train(train_args, *train_cmd, threads);
        if (infer->parsed()) return run_infer(infer_args, threads);
        if (eval->parsed()) return run_eval(eval_args);
        if (grad->parsed()) return run_gradcheck_cmd(bits, grad_seed);
    } catch (const CheckFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kCheckFailed;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
