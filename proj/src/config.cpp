#include "xssm/config.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>
#include <variant>

#include "xssm/io.hpp"

namespace xssm::config {
namespace {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "64-bit size_t expected");
using Ref = std::variant<std::size_t*, double*, bool*>;
using Table = std::vector<std::pair<std::string, Ref>>;

Table model_table(ModelConfig& m) {
  return {{"channels", &m.channels},
          {"scale", &m.scale},
          {"stages", &m.stages},
          {"blocks_per_stage", &m.blocks_per_stage},
          {"patch", &m.patch},
          {"squeeze", &m.squeeze},
          {"state", &m.state},
          {"expansion", &m.expansion},
          {"ffn_expansion", &m.ffn_expansion},
          {"scan_group", &m.scan_group},
          {"use_issm", &m.use_issm},
          {"use_cmmt_r", &m.use_cmmt_r},
          {"use_cmmt_d", &m.use_cmmt_d}};
}

Table train_table(train::TrainConfig& t) {
  return {{"lr", &t.lr},
          {"epochs", &t.epochs},
          {"crop", &t.crop},
          {"fourier_weight", &t.fourier_weight},
          {"batch", &t.batch},
          {"seed", &t.seed},
          {"max_steps", &t.max_steps},
          {"train_scenes", &t.train_scenes},
          {"eval_scenes", &t.eval_scenes},
          {"scene_size", &t.scene_size}};
}

void assign(const std::string& key, const std::string& text, const Ref& ref,
            const std::string& origin) {
  auto bad = [&](const char* type) {
    return std::invalid_argument(origin + ": key '" + key + "' expects " + type + ", got '" +
                                 text + "'");
  };
  std::visit(
      [&](auto* target) {
        using V = std::remove_pointer_t<decltype(target)>;
        if constexpr (std::is_same_v<V, bool>) {
          if (text == "true" || text == "1") {
            *target = true;
          } else if (text == "false" || text == "0") {
            *target = false;
          } else {
            throw bad("true/false");
          }
        } else if constexpr (std::is_same_v<V, double>) {
          std::size_t used = 0;
          double v = 0;
          try {
            v = std::stod(text, &used);
          } catch (const std::exception&) {
            throw bad("a number");
          }
          if (used != text.size()) throw bad("a number");
          *target = v;
        } else {
          V v{};
          const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
          if (ec != std::errc() || ptr != text.data() + text.size()) {
            // Integral values may arrive in float form from a checkpoint.
            std::size_t used = 0;
            double d = -1;
            try {
              d = std::stod(text, &used);
            } catch (const std::exception&) {
              throw bad("a non-negative integer");
            }
            if (used != text.size() || d < 0 || d != static_cast<double>(static_cast<V>(d))) {
              throw bad("a non-negative integer");
            }
            v = static_cast<V>(d);
          }
          *target = v;
        }
      },
      ref);
}

// `lines` maps keys to their source line, when known.
void apply(const KeyValues& fields, const Table& table, const std::string& origin,
           const std::map<std::string, std::size_t>& lines = {}) {
  for (const auto& [key, value] : fields) {
    const auto at = lines.find(key);
    const std::string where = at == lines.end() ? origin : origin + ":" + std::to_string(at->second);
    bool found = false;
    for (const auto& [name, ref] : table) {
      if (name == key) {
        assign(key, value, ref, where);
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::string show(const Ref& ref) {
  return std::visit(
      [](auto* v) {
        using V = std::remove_pointer_t<decltype(v)>;
        std::ostringstream os;
        if constexpr (std::is_same_v<V, bool>) {
          os << (*v ? "true" : "false");
        } else {
          os << *v;
        }
        return os.str();
      },
      ref);
}

KeyValues parse_lines(const std::string& text, const std::string& origin,
                      std::map<std::string, std::size_t>* lines) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(number);
    if (eq == std::string::npos) throw std::invalid_argument(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) throw std::invalid_argument(where + ": empty key or value");
    if (!out.emplace(key, value).second) throw std::invalid_argument(where + ": duplicate key '" + key + "'");
    if (lines) (*lines)[key] = number;
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  return parse_lines(text, origin, nullptr);
}

std::vector<std::pair<std::string, double>> model_fields(const ModelConfig& config) {
  ModelConfig copy = config;
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [name, ref] : model_table(copy)) {
    out.emplace_back(name, std::visit([](auto* v) { return static_cast<double>(*v); }, ref));
  }
  return out;
}

ModelConfig model_from_fields(const KeyValues& fields, const std::string& origin) {
  ModelConfig m;
  apply(fields, model_table(m), origin);
  m.validate();
  return m;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig rc;
  auto table = model_table(rc.model);
  for (auto& entry : train_table(rc.train)) table.push_back(entry);
  std::map<std::string, std::size_t> lines;
  const auto fields = parse_lines(text, origin, &lines);
  apply(fields, table, origin, lines);
  rc.model.validate();
  rc.train.validate(rc.model);
  return rc;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.string());
}

std::string format_config(const RunConfig& config) {
  RunConfig copy = config;
  std::ostringstream os;
  os << "# model\n";
  for (const auto& [name, ref] : model_table(copy.model)) os << name << " = " << show(ref) << "\n";
  os << "# training\n";
  for (const auto& [name, ref] : train_table(copy.train)) os << name << " = " << show(ref) << "\n";
  return os.str();
}

}  // namespace xssm::config
