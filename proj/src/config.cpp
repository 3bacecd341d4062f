#include "remm/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace remm {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::defaults() {
    Config c;
    auto& v = c.values_;
    v["seed"] = "0";
    v["workers"] = "0";  // 0 = logical cores
    v["net.unshared_channels"] = "16,32";
    v["net.shared_channels"] = "64,128,128";
    v["net.detector_window"] = "5";
    v["net.tau"] = "0.1";
    v["net.lambda1"] = "1.0";
    v["net.lambda2"] = "1.0";
    v["net.lambda3"] = "1.0";
    v["net.positives"] = "256";
    v["train.steps"] = "800";
    v["train.batch"] = "4";
    v["train.lr"] = "0.001";
    v["train.translation_frac"] = "0.05";
    v["cyclic.g_size"] = "16";
    v["cyclic.topk_mode"] = "ratio";  // top1 | ratio
    v["cyclic.topk_ratio"] = "0.1";
    v["extract.scales"] = "0.5,0.707,1.0,1.414";
    v["extract.max_keypoints"] = "5000";
    v["extract.nms_window"] = "5";
    v["match.min_sim"] = "0.0";
    v["ransac.inlier_px"] = "3.0";
    v["ransac.max_iters"] = "2000";
    v["bench.translation_frac"] = "0.1";
    v["eval.pixel_thresh"] = "3.0";
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end())
        throw std::invalid_argument("unknown config key: " + key);
    it->second = trim(value);
}

void Config::load_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void Config::write_file(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config file: " + path);
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
}

const std::string& Config::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end())
        throw std::invalid_argument("unknown config key: " + key);
    return it->second;
}

int Config::get_int(const std::string& key) const {
    return std::stoi(get(key));
}

double Config::get_double(const std::string& key) const {
    return std::stod(get(key));
}

std::vector<int> Config::get_int_list(const std::string& key) const {
    std::vector<int> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(trim(tok)));
    return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(trim(tok)));
    return out;
}

}  // namespace remm
