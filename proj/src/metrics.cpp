#include "baton/metrics.hpp"

#include <cinttypes>
#include <cstdio>
#include <sstream>

namespace baton {

const char* MetricsWriter::header() {
  return "step,episode,return,success,dyn_loss,rew_loss,q_loss,actor_loss,entropy,"
         "plan_iters,step_ms,q_scale";
}

MetricsWriter::MetricsWriter(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw Error("metrics: cannot open " + path);
  out_ << header() << "\n";
  out_.flush();
}

void MetricsWriter::append(const MetricsRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%" PRId64 ",%" PRId64 ",%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g",
                r.step, r.episode, static_cast<double>(r.episode_return), r.success,
                static_cast<double>(r.dyn_loss), static_cast<double>(r.rew_loss),
                static_cast<double>(r.q_loss), static_cast<double>(r.actor_loss),
                static_cast<double>(r.entropy), static_cast<double>(r.plan_iters),
                static_cast<double>(r.step_ms), static_cast<double>(r.q_scale));
  out_ << buf << "\n";
  out_.flush();
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("metrics: cannot open " + path);
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<MetricsRow> rows;
  size_t pos = 0;
  bool first = true;
  while (pos < content.size()) {
    size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // unterminated final line: ignore
    std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (first) {
      first = false;
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 12) continue;  // malformed row: skip
    try {
      MetricsRow r;
      r.step = std::stoll(fields[0]);
      r.episode = std::stoll(fields[1]);
      r.episode_return = static_cast<real>(std::stod(fields[2]));
      r.success = std::stoi(fields[3]);
      r.dyn_loss = static_cast<real>(std::stod(fields[4]));
      r.rew_loss = static_cast<real>(std::stod(fields[5]));
      r.q_loss = static_cast<real>(std::stod(fields[6]));
      r.actor_loss = static_cast<real>(std::stod(fields[7]));
      r.entropy = static_cast<real>(std::stod(fields[8]));
      r.plan_iters = static_cast<real>(std::stod(fields[9]));
      r.step_ms = static_cast<real>(std::stod(fields[10]));
      r.q_scale = static_cast<real>(std::stod(fields[11]));
      rows.push_back(r);
    } catch (...) {
      continue;
    }
  }
  return rows;
}

}  // namespace baton
