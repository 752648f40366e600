#include "hitter/trainer.hpp"

#include <sstream>

namespace hitter {

double lr_at_step(int64_t step, int64_t total_steps, double peak_lr, double warmup_fraction) {
  if (total_steps < 1) throw ConfigError("lr_at_step: total_steps must be >= 1");
  if (step < 0 || step > total_steps)
    throw ConfigError("lr_at_step: step " + std::to_string(step) + " outside [0, " +
                      std::to_string(total_steps) + "]");
  if (warmup_fraction <= 0.0 || warmup_fraction >= 1.0)
    throw ConfigError("lr_at_step: warmup_fraction must be in (0,1)");
  const int64_t warmup = std::max<int64_t>(
      1, static_cast<int64_t>(std::floor(warmup_fraction * static_cast<double>(total_steps))));
  if (step <= warmup)
    return peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  return peak_lr * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup);
}

std::string RunLedger::to_csv() const {
  std::ostringstream out;
  out << "epoch,loss,dev_mrr,lr,seconds\n";
  for (const EpochRow& r : rows) {
    out << r.epoch << "," << r.loss << ",";
    if (!std::isnan(r.dev_mrr)) out << r.dev_mrr;
    out << "," << r.lr << "," << r.seconds << "\n";
  }
  return out.str();
}

}  // namespace hitter
