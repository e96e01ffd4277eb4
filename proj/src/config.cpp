#include "lssltc/config.hpp"

#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace lssltc {

namespace pt = boost::property_tree;

namespace {

template <typename V>
V parse_value(const std::string& key, const std::string& raw) {
    std::istringstream is(raw);
    V v{};
    is >> v;
    if (is.fail() || !(is >> std::ws).eof()) throw ConfigError("config: bad value '" + raw + "' for " + key);
    return v;
}

template <>
bool parse_value<bool>(const std::string& key, const std::string& raw) {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw ConfigError("config: bad boolean '" + raw + "' for " + key);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& raw) {
    std::vector<std::size_t> out;
    std::stringstream ss(raw);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_value<std::size_t>(key, item));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string num(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

void apply(RunConfig& c, const std::string& section, const std::string& key, const std::string& raw) {
    const std::string full = section + "." + key;
    auto sz = [&] { return parse_value<std::size_t>(full, raw); };
    auto u64 = [&] { return parse_value<std::uint64_t>(full, raw); };
    auto dbl = [&] { return parse_value<double>(full, raw); };
    auto& n = c.network;
    auto& s = c.synth;
    auto& t = c.train;
    if (section == "network") {
        if (key == "input_h") return void(n.input_h = sz());
        if (key == "input_w") return void(n.input_w = sz());
        if (key == "encoder_channels") return void(n.encoder_channels = parse_list(full, raw));
        if (key == "stem_channels") return void(n.stem_channels = sz());
        if (key == "ltc_hidden") return void(n.ltc_hidden = sz());
        if (key == "steps") return void(n.steps = sz());
        if (key == "dt") return void(n.dt = dbl());
        if (key == "use_lss") return void(n.use_lss = parse_value<bool>(full, raw));
        if (key == "seed") return void(n.seed = u64());
    } else if (section == "lss") {
        if (key == "patch") return void(n.lss.patch_size = sz());
        if (key == "radius") return void(n.lss.search_radius = sz());
        if (key == "epsilon") return void(n.lss.epsilon = dbl());
    } else if (section == "loss") {
        if (key == "main") return void(t.weights.main = dbl());
        if (key == "aux1") return void(t.weights.aux1 = dbl());
        if (key == "aux2") return void(t.weights.aux2 = dbl());
        if (key == "boundary") return void(t.weights.boundary = dbl());
    } else if (section == "synth") {
        if (key == "count") return void(s.count = sz());
        if (key == "size") return void(s.size = sz());
        if (key == "seed") return void(s.seed = u64());
        if (key == "background_frequency") return void(s.background_frequency = dbl());
        if (key == "wound_frequency") return void(s.wound_frequency = dbl());
        if (key == "noise_sigma") return void(s.noise_sigma = dbl());
        if (key == "gain_min") return void(s.gain_min = dbl());
        if (key == "gain_max") return void(s.gain_max = dbl());
        if (key == "offset_range") return void(s.offset_range = dbl());
    } else if (section == "train") {
        if (key == "epochs") return void(t.epochs = sz());
        if (key == "batch_size") return void(t.batch_size = sz());
        if (key == "lr") return void(t.lr = dbl());
        if (key == "beta1") return void(t.beta1 = dbl());
        if (key == "beta2") return void(t.beta2 = dbl());
        if (key == "adam_eps") return void(t.adam_eps = dbl());
        if (key == "shuffle_seed") return void(t.shuffle_seed = u64());
    } else {
        throw ConfigError("config: unknown section [" + section + "]");
    }
    throw ConfigError("config: unknown key " + full);
}

}  // namespace

void RunConfig::validate() const {
    try {
        network.validate();
        synth.validate();
        train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

std::string RunConfig::to_text() const {
    const auto& n = network;
    const auto& s = synth;
    const auto& t = train;
    std::ostringstream os;
    os << "[network]\n"
       << "input_h = " << n.input_h << "\ninput_w = " << n.input_w << "\nencoder_channels = " << join(n.encoder_channels)
       << "\nstem_channels = " << n.stem_channels << "\nltc_hidden = " << n.ltc_hidden << "\nsteps = " << n.steps
       << "\ndt = " << num(n.dt) << "\nuse_lss = " << (n.use_lss ? "true" : "false") << "\nseed = " << n.seed << "\n\n";
    os << "[lss]\npatch = " << n.lss.patch_size << "\nradius = " << n.lss.search_radius
       << "\nepsilon = " << num(n.lss.epsilon) << "\n\n";
    os << "[loss]\nmain = " << num(t.weights.main) << "\naux1 = " << num(t.weights.aux1)
       << "\naux2 = " << num(t.weights.aux2) << "\nboundary = " << num(t.weights.boundary) << "\n\n";
    os << "[synth]\ncount = " << s.count << "\nsize = " << s.size << "\nseed = " << s.seed
       << "\nbackground_frequency = " << num(s.background_frequency) << "\nwound_frequency = " << num(s.wound_frequency)
       << "\nnoise_sigma = " << num(s.noise_sigma) << "\ngain_min = " << num(s.gain_min)
       << "\ngain_max = " << num(s.gain_max) << "\noffset_range = " << num(s.offset_range) << "\n\n";
    os << "[train]\nepochs = " << t.epochs << "\nbatch_size = " << t.batch_size << "\nlr = " << num(t.lr)
       << "\nbeta1 = " << num(t.beta1) << "\nbeta2 = " << num(t.beta2) << "\nadam_eps = " << num(t.adam_eps)
       << "\nshuffle_seed = " << t.shuffle_seed << "\n";
    return os.str();
}

RunConfig RunConfig::parse(const std::string& text) {
    pt::ptree tree;
    std::istringstream is(text);
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig cfg;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' outside of a section");
        for (const auto& [key, value] : body) apply(cfg, section, key, value.get_value<std::string>());
    }
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace lssltc
