#include "dpl/trainlog.hpp"

#include <ostream>

#include "dpl/csv.hpp"

namespace dpl {

void write_decspg_csv(const TrainLog& log, std::ostream& os) {
  os << "epoch,return_mean,return_se";
  for (int i = 0; i < log.n_agents; ++i) os << ",sigma2_agent_" << i;
  os << ",reached_goal,ne_gap\n";
  for (const auto& r : log.epochs) {
    os << r.epoch << ',' << fmt_double(r.return_mean) << ','
       << fmt_double(r.return_se);
    for (int i = 0; i < log.n_agents; ++i)
      os << ',' << (i < static_cast<int>(r.sigma2.size()) ? fmt_double(r.sigma2[i])
                                                          : "nan");
    os << ',' << (r.reached_goal ? 1 : 0) << ',' << fmt_double(r.ne_gap) << '\n';
  }
}

void write_ddpl_csv(const TrainLog& log, std::ostream& os) {
  os << "epoch,return";
  for (int i = 0; i < log.n_agents; ++i) os << ",td_loss_" << i;
  for (int i = 0; i < log.n_agents; ++i) os << ",issm_loss_" << i;
  for (int i = 0; i < log.n_agents; ++i) os << ",clamp_count_" << i;
  os << '\n';
  for (const auto& r : log.epochs) {
    os << r.epoch << ',' << fmt_double(r.return_mean);
    for (int i = 0; i < log.n_agents; ++i)
      os << ',' << (i < static_cast<int>(r.td_loss.size()) ? fmt_double(r.td_loss[i])
                                                           : "nan");
    for (int i = 0; i < log.n_agents; ++i)
      os << ','
         << (i < static_cast<int>(r.issm_loss.size()) ? fmt_double(r.issm_loss[i])
                                                      : "nan");
    for (int i = 0; i < log.n_agents; ++i)
      os << ','
         << (i < static_cast<int>(r.clamp_count.size())
                 ? fmt_int(r.clamp_count[i])
                 : "0");
    os << '\n';
  }
}

}  // namespace dpl
