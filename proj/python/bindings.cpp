#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cgrl/causal_reward.hpp"
#include "cgrl/config.hpp"
#include "cgrl/eval.hpp"
#include "cgrl/experiments.hpp"
#include "cgrl/grpo.hpp"
#include "cgrl/rng.hpp"
#include "cgrl/train.hpp"

namespace py = pybind11;
using namespace cgrl;

namespace {

Trajectory sample_with_seed(const PolicyParams& params, const TaskSpec& task,
                            const Episode& episode, std::uint64_t seed,
                            int max_len, double temperature) {
  auto eng = SeedStream{seed}.engine();
  return sample_trajectory(params, task.vocab, episode, eng, max_len, temperature);
}

RunConfig config_from_kwargs(const py::dict& kwargs) {
  ConfigParser parser;
  for (const auto& item : kwargs) {
    parser.assign(py::str(item.first).cast<std::string>(),
                  py::str(item.second).cast<std::string>());
  }
  return parser.finish();
}

}  // namespace

PYBIND11_MODULE(_cgrl, m) {
  m.doc() = "Causal-completeness-guided GRPO laboratory";

  py::class_<Vocab>(m, "Vocab")
      .def_readonly("tokens", &Vocab::tokens)
      .def_readonly("bos", &Vocab::bos)
      .def_readonly("sep", &Vocab::sep)
      .def_readonly("qend", &Vocab::qend)
      .def_readonly("answer", &Vocab::answer)
      .def_readonly("eos", &Vocab::eos)
      .def_readonly("probe", &Vocab::probe)
      .def_readonly("yes", &Vocab::yes)
      .def_readonly("no", &Vocab::no)
      .def("size", &Vocab::size)
      .def("id", &Vocab::id)
      .def("text", &Vocab::text);

  py::class_<Scene>(m, "Scene")
      .def_readonly("causal_values", &Scene::causal_values)
      .def_readonly("noncausal_values", &Scene::noncausal_values);

  py::class_<Episode>(m, "Episode")
      .def_readonly("scene", &Episode::scene)
      .def_readonly("template_id", &Episode::template_id)
      .def_readonly("input_tokens", &Episode::input_tokens)
      .def_readonly("truth_answer", &Episode::truth_answer)
      .def_readonly("seed", &Episode::seed)
      .def_readonly("index", &Episode::index);

  py::class_<TaskSpec>(m, "TaskSpec")
      .def_readonly("vocab", &TaskSpec::vocab);

  py::class_<PolicyParams>(m, "PolicyParams")
      .def_static("zeros", &PolicyParams::zeros)
      .def_static("init", &PolicyParams::init)
      .def_readwrite("theta", &PolicyParams::theta)
      .def_readonly("vocab_size", &PolicyParams::vocab_size)
      .def_readonly("embed_dim", &PolicyParams::embed_dim)
      .def("param_count", &PolicyParams::param_count);

  py::class_<Trajectory>(m, "Trajectory")
      .def(py::init<>())
      .def_readwrite("tokens", &Trajectory::tokens)
      .def_readonly("logprobs", &Trajectory::logprobs)
      .def_readonly("terminated", &Trajectory::terminated)
      .def_readwrite("answer", &Trajectory::answer);

  py::class_<TokenCausalScore>(m, "TokenCausalScore")
      .def_readonly("position", &TokenCausalScore::position)
      .def_readonly("s_suff_raw", &TokenCausalScore::s_suff_raw)
      .def_readonly("s_nec_raw", &TokenCausalScore::s_nec_raw)
      .def_readonly("s_suff_norm", &TokenCausalScore::s_suff_norm)
      .def_readonly("s_nec_norm", &TokenCausalScore::s_nec_norm)
      .def_readonly("r_causal", &TokenCausalScore::r_causal);

  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("n_episodes", &EvalReport::n_episodes)
      .def_readonly("accuracy", &EvalReport::accuracy)
      .def_readonly("omission_rate_s", &EvalReport::omission_rate_s)
      .def_readonly("fabrication_rate_i", &EvalReport::fabrication_rate_i)
      .def_readonly("probe_f1", &EvalReport::probe_f1);

  py::class_<MetricsRecord>(m, "MetricsRecord")
      .def_readonly("iteration", &MetricsRecord::iteration)
      .def_readonly("mean_task_reward", &MetricsRecord::mean_task_reward)
      .def_readonly("mean_r_causal", &MetricsRecord::mean_r_causal)
      .def_readonly("objective", &MetricsRecord::objective)
      .def_readonly("kl", &MetricsRecord::kl)
      .def_readonly("omission_rate", &MetricsRecord::omission_rate)
      .def_readonly("fabrication_rate", &MetricsRecord::fabrication_rate)
      .def_readonly("probe_f1", &MetricsRecord::probe_f1);

  m.def("default_task", &default_task, py::arg("spurious_p"));
  m.def("tiny_task", &tiny_task, py::arg("spurious_p"));
  m.def("generate_dataset", &generate_dataset, py::arg("task"), py::arg("n"),
        py::arg("data_stream_seed"));
  m.def("task_reward", &task_reward, py::arg("pred"), py::arg("truth"));
  m.def(
      "classify_error",
      [](const std::set<int>& pred, const Episode& ep) {
        return std::string(to_string(classify_error(pred, ep)));
      },
      py::arg("pred"), py::arg("episode"));
  m.def("extract_answer", &extract_answer, py::arg("tokens"), py::arg("vocab"));
  m.def("step_distribution", &step_distribution, py::arg("params"),
        py::arg("episode"), py::arg("prefix"));
  m.def("sample_trajectory", &sample_with_seed, py::arg("params"), py::arg("task"),
        py::arg("episode"), py::arg("seed"), py::arg("max_len") = 24,
        py::arg("temperature") = 1.0);
  m.def(
      "greedy_complete",
      [](const PolicyParams& params, const TaskSpec& task, const Episode& ep,
         const std::vector<int>& prefix, int max_len) {
        return greedy_complete(params, task.vocab, ep, prefix, max_len);
      },
      py::arg("params"), py::arg("task"), py::arg("episode"), py::arg("prefix"),
      py::arg("max_len") = 24);
  m.def("logprob_and_grad", &logprob_and_grad, py::arg("params"), py::arg("episode"),
        py::arg("trajectory"));
  m.def(
      "score_trajectory",
      [](const PolicyParams& params, const TaskSpec& task, const Episode& ep,
         const Trajectory& traj, int k_perturb, const std::string& mode,
         const std::string& variant, double lambda_s, double lambda_n, int max_len) {
        PerturbationConfig config;
        config.k_perturb = k_perturb;
        config.mode = perturb_mode_from_string(mode);
        config.variant = necessity_variant_from_string(variant);
        return score_trajectory(params, ep, task.vocab, traj, config, lambda_s,
                                lambda_n, max_len);
      },
      py::arg("params"), py::arg("task"), py::arg("episode"), py::arg("trajectory"),
      py::arg("k_perturb") = 4, py::arg("mode") = "fixed-suffix",
      py::arg("variant") = "literal", py::arg("lambda_s") = 0.5,
      py::arg("lambda_n") = 0.5, py::arg("max_len") = 24);
  m.def("standardize", &standardize, py::arg("values"), py::arg("eps_std") = 1e-12);
  m.def("clipped_term", &clipped_term, py::arg("rho"), py::arg("adv"),
        py::arg("eps_clip"));
  m.def(
      "categorical_kl",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        return categorical_kl(p, q);
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "evaluate",
      [](const PolicyParams& params, const TaskSpec& task,
         const std::vector<Episode>& episodes, int max_len) {
        return evaluate(params, task, episodes, max_len);
      },
      py::arg("params"), py::arg("task"), py::arg("episodes"), py::arg("max_len") = 24);
  m.def(
      "probe_f1",
      [](const PolicyParams& params, const TaskSpec& task,
         const std::vector<Episode>& episodes, int max_len, std::uint64_t seed) {
        return probe_eval(params, task, episodes, max_len, seed).f1_overall;
      },
      py::arg("params"), py::arg("task"), py::arg("episodes"),
      py::arg("max_len") = 24, py::arg("seed") = 0);
  m.def(
      "train",
      [](const py::dict& kwargs) {
        const RunConfig config = config_from_kwargs(kwargs);
        const TrainInputs inputs = make_train_inputs(config);
        const TrainResult result = train(inputs);
        return py::make_tuple(result.params, result.metrics);
      },
      "Run training from config keys; returns (params, metrics)");
}
