#include "milora/report.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>

#include "milora/errors.hpp"

namespace milora {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string train_log_csv(const std::vector<TrainLogRow>& log) {
  std::string out = "step,train_loss,dev_ppl,lb_loss,hist_hash\n";
  for (const TrainLogRow& r : log) {
    out += std::to_string(r.step) + "," + format_double(r.train_loss) + "," +
           format_double(r.dev_ppl) + "," + format_double(r.lb) + "," +
           std::to_string(r.hist_hash) + "\n";
  }
  return out;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "mode,k,gating,tokens,router_evals,adapter_macs,activated_params,wall_tps\n";
  for (const BenchRow& r : rows) {
    out += r.mode + "," + std::to_string(r.k) + "," + r.gating + "," +
           std::to_string(r.tokens) + "," + std::to_string(r.router_evals) + "," +
           std::to_string(r.adapter_macs) + "," + std::to_string(r.activated_params) +
           "," + format_double(r.wall_tps) + "\n";
  }
  return out;
}

std::string bench_summary(const std::vector<BenchRow>& rows) {
  std::string out;
  for (const BenchRow& pa : rows) {
    if (pa.mode != "prompt_aware") continue;
    for (const BenchRow& pt : rows) {
      if (pt.mode != "per_token" || pt.k != pa.k || pt.gating != pa.gating ||
          pt.tokens != pa.tokens)
        continue;
      const double ratio = pa.router_evals == 0
                               ? 0.0
                               : static_cast<double>(pt.router_evals) /
                                     static_cast<double>(pa.router_evals);
      out += "k=" + std::to_string(pa.k) + " " + pa.gating +
             ": per_token router_evals / prompt_aware = " +
             std::to_string(pt.router_evals) + " / " +
             std::to_string(pa.router_evals) + " = " + format_double(ratio) +
             "x (x7 per-module multiplicity: " + std::to_string(pt.router_evals * 7) +
             " vs " + std::to_string(pa.router_evals) + ", " +
             format_double(ratio * 7.0) + "x)\n";
    }
  }
  out +=
      "note: per_token re-routes one layer-shaped router per layer per decode "
      "step; a baseline that routes per module would run 7 of them per layer, "
      "so its router cost is the per_token figure x7 (shown above).\n";
  return out;
}

Tensor expert_selection_frequency(const Model& m, const std::vector<EncodedSeq>& data) {
  if (!m.routed())
    throw ContractError("expert distribution requires a routed model");
  return evaluate(m, data).selection_freq;
}

std::string distribution_csv(const Tensor& freq) {
  std::string out = "layer,module,frequency\n";
  for (int l = 0; l < freq.rows(); ++l)
    for (int e = 0; e < freq.cols(); ++e)
      out += std::to_string(l) + "," + std::to_string(e) + "," +
             format_double(freq.at(l, e)) + "\n";
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  f.flush();
  if (!f) throw IoError("write to " + path + " failed");
}

}  // namespace milora
