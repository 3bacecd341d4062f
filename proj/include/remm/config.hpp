#pragma once

#include <map>
#include <string>
#include <vector>

namespace remm {

// Flat "section.key = value" configuration. Every key must be registered;
// unknown keys are rejected so typos cannot silently fall back to defaults.
class Config {
  public:
    static Config defaults();

    void load_file(const std::string& path);      // applies overrides
    void set(const std::string& key, const std::string& value);
    void write_file(const std::string& path) const;

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace remm
