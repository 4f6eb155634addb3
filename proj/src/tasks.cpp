#include "visurf/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "json.hpp"
#include "visurf/errors.hpp"
#include "visurf/rng.hpp"

namespace visurf::tasks {

const char* family_name(TaskFamily family) {
  return family == TaskFamily::kPostTrain ? "post_train" : "pretrain_held";
}

TaskFamily family_from_name(const std::string& name) {
  if (name == "post_train") return TaskFamily::kPostTrain;
  if (name == "pretrain_held") return TaskFamily::kPretrainHeld;
  throw DataError("tasks: unknown family '" + name + "'");
}

std::vector<int> context_gt(TaskFamily family, int context, int n_contexts, int n_items) {
  if (n_items < 4) throw ConfigError("tasks: class map needs at least 4 item tokens");
  if (context < 0 || context >= n_contexts) throw DataError("tasks: context out of range");
  const int a = context % n_items;
  const int held_b = (context + 2) % n_items;
  std::vector<int> held{a, held_b};
  std::sort(held.begin(), held.end());
  if (family == TaskFamily::kPretrainHeld) return held;
  if (context == kNonObjectContext) return {};
  if (n_contexts >= 5 && context >= n_contexts - 2) {
    // Conflict classes: one item swapped relative to the held-family label.
    std::vector<int> swapped{a, (context + 3) % n_items};
    std::sort(swapped.begin(), swapped.end());
    return swapped;
  }
  return held;
}

Dataset generate_dataset(int n, double non_object_fraction, uint64_t seed, TaskFamily family,
                         int n_contexts, int n_items, int64_t id_offset) {
  if (n <= 0) throw ConfigError("tasks: cannot generate an empty dataset");
  if (non_object_fraction < 0.0 || non_object_fraction > 1.0)
    throw ConfigError("tasks: non_object_fraction must be in [0, 1]");
  if (n_contexts < 2) throw ConfigError("tasks: need at least 2 context classes");
  if (family == TaskFamily::kPretrainHeld && non_object_fraction > 0.0)
    throw ConfigError("tasks: the pretrain_held family has no non-object class");

  const int n_empty = static_cast<int>(std::lround(n * non_object_fraction));
  Rng rng(seed);
  Rng context_rng = rng.derive({0x63747874ull});

  std::vector<TaskInstance> instances;
  instances.reserve(n);
  for (int i = 0; i < n_empty; ++i) {
    TaskInstance inst;
    inst.context = kNonObjectContext;
    inst.family = family;
    instances.push_back(std::move(inst));
  }
  const int first_object_context = (family == TaskFamily::kPostTrain) ? 1 : 0;
  const int n_object_contexts = n_contexts - first_object_context;
  for (int i = n_empty; i < n; ++i) {
    TaskInstance inst;
    inst.context =
        first_object_context + static_cast<int>(context_rng.next_below(n_object_contexts));
    inst.gt_items = context_gt(family, inst.context, n_contexts, n_items);
    inst.family = family;
    instances.push_back(std::move(inst));
  }

  // Uniform mix of non-object instances into the stream (Fisher-Yates).
  Rng shuffle_rng = rng.derive({0x73687566ull});
  for (size_t i = instances.size(); i > 1; --i) {
    const size_t j = shuffle_rng.next_below(i);
    std::swap(instances[i - 1], instances[j]);
  }
  for (size_t i = 0; i < instances.size(); ++i)
    instances[i].id = id_offset + static_cast<int64_t>(i);

  Dataset dataset;
  dataset.instances = std::move(instances);
  dataset.non_object_fraction = non_object_fraction;
  dataset.seed = seed;
  return dataset;
}

std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset, double eval_fraction,
                                             uint64_t seed) {
  if (eval_fraction < 0.0 || eval_fraction > 1.0)
    throw ConfigError("tasks: eval_fraction must be in [0, 1]");
  std::map<int, std::vector<size_t>> by_context;
  for (size_t i = 0; i < dataset.instances.size(); ++i)
    by_context[dataset.instances[i].context].push_back(i);

  Rng rng(seed);
  std::set<size_t> eval_indices;
  for (auto& [context, indices] : by_context) {
    Rng stream = rng.derive({0x73706c74ull, static_cast<uint64_t>(context)});
    for (size_t i = indices.size(); i > 1; --i)
      std::swap(indices[i - 1], indices[stream.next_below(i)]);
    const auto take = static_cast<size_t>(std::lround(indices.size() * eval_fraction));
    for (size_t i = 0; i < take; ++i) eval_indices.insert(indices[i]);
  }

  Dataset train, eval;
  train.seed = eval.seed = dataset.seed;
  for (size_t i = 0; i < dataset.instances.size(); ++i) {
    (eval_indices.count(i) ? eval : train).instances.push_back(dataset.instances[i]);
  }
  auto fraction = [](const Dataset& d) {
    if (d.instances.empty()) return 0.0;
    int64_t empties = 0;
    for (const auto& inst : d.instances) empties += inst.is_non_object() ? 1 : 0;
    return static_cast<double>(empties) / static_cast<double>(d.instances.size());
  };
  train.non_object_fraction = fraction(train);
  eval.non_object_fraction = fraction(eval);
  return {std::move(train), std::move(eval)};
}

TokenSequence serialize_label(const std::vector<int>& gt_items, SerializationVariant variant) {
  std::vector<int> items = gt_items;
  std::sort(items.begin(), items.end());
  if (!variant.ascending) std::reverse(items.begin(), items.end());

  TokenSequence seq;
  seq.ids.push_back(Vocab::kAnsOpen);
  for (size_t i = 0; i < items.size(); ++i) {
    if (i > 0 && variant.use_sep) seq.ids.push_back(Vocab::kSep);
    seq.ids.push_back(Vocab::item(items[i]));
  }
  seq.ids.push_back(Vocab::kAnsClose);
  seq.ids.push_back(Vocab::kEos);
  seq.terminated = true;
  return seq;
}

TokenSequence canonicalize_label(const std::vector<int>& gt_items, const TabularPolicy& policy,
                                 int context) {
  TokenSequence best;
  double best_lp = 0.0;
  bool first = true;
  for (const SerializationVariant& variant : kVariantOrder) {
    TokenSequence candidate = serialize_label(gt_items, variant);
    // Forms the policy cannot emit carry zero probability; drop them.
    if (candidate.length() > policy.max_len()) continue;
    const double lp = policy.logprob(context, candidate);
    if (first || lp > best_lp) {
      best = std::move(candidate);
      best_lp = lp;
      first = false;
    }
  }
  if (first)
    throw DataError("tasks: no label serialization fits within the policy's max_len");
  return best;
}

DecodeResult decode_answer(const TokenSequence& seq) {
  DecodeResult result;
  const auto& ids = seq.ids;
  const size_t n = ids.size();

  // Best-effort extraction: item tokens between the first ANS_OPEN and the
  // next ANS_CLOSE, independent of the grammar pass below. Any id past the
  // structural range is an item token.
  auto open_it = std::find(ids.begin(), ids.end(), Vocab::kAnsOpen);
  if (open_it != ids.end()) {
    auto close_it = std::find(open_it + 1, ids.end(), Vocab::kAnsClose);
    if (close_it != ids.end()) {
      std::set<int> found;
      for (auto it = open_it + 1; it != close_it; ++it)
        if (*it >= Vocab::kNumStructural) found.insert(*it - Vocab::kNumStructural);
      result.items = std::vector<int>(found.begin(), found.end());
    }
  }

  // Grammar pass: [THINK_OPEN body THINK_CLOSE] ANS_OPEN items ANS_CLOSE EOS.
  size_t i = 0;
  if (i < n && ids[i] == Vocab::kThinkOpen) {
    ++i;
    while (i < n && ids[i] != Vocab::kThinkClose) {
      const int t = ids[i];
      if (t == Vocab::kThinkOpen || t == Vocab::kAnsOpen || t == Vocab::kAnsClose ||
          t == Vocab::kEos)
        return result;
      ++i;
    }
    if (i >= n) return result;  // unmatched THINK_OPEN
    ++i;
    result.has_think = true;
  }
  if (i >= n || ids[i] != Vocab::kAnsOpen) return result;
  ++i;
  bool pending_sep = false;  // a SEP was seen and an item must follow
  bool saw_item = false;
  while (i < n && ids[i] != Vocab::kAnsClose) {
    const int t = ids[i];
    if (t >= Vocab::kNumStructural) {
      saw_item = true;
      pending_sep = false;
    } else if (t == Vocab::kSep && saw_item && !pending_sep) {
      pending_sep = true;
    } else {
      return result;
    }
    ++i;
  }
  if (i >= n || pending_sep) return result;
  ++i;  // ANS_CLOSE
  if (i + 1 == n && ids[i] == Vocab::kEos && seq.terminated) result.format_ok = true;
  return result;
}

void save_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("tasks: cannot open dataset file for writing: " + path.string());
  for (const TaskInstance& inst : dataset.instances) {
    nlohmann::json line;
    line["id"] = inst.id;
    line["context"] = inst.context;
    line["gt_items"] = inst.gt_items;
    line["family"] = family_name(inst.family);
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("tasks: write failed: " + path.string());
}

Dataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("tasks: cannot open dataset file: " + path.string());
  Dataset dataset;
  std::string line;
  int64_t empties = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json parsed;
    try {
      parsed = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("tasks: bad dataset line: " + std::string(e.what()));
    }
    TaskInstance inst;
    inst.id = parsed.at("id").get<int64_t>();
    inst.context = parsed.at("context").get<int>();
    inst.gt_items = parsed.at("gt_items").get<std::vector<int>>();
    inst.family = family_from_name(parsed.at("family").get<std::string>());
    std::sort(inst.gt_items.begin(), inst.gt_items.end());
    empties += inst.is_non_object() ? 1 : 0;
    dataset.instances.push_back(std::move(inst));
  }
  if (dataset.instances.empty()) throw DataError("tasks: dataset file is empty: " + path.string());
  dataset.non_object_fraction =
      static_cast<double>(empties) / static_cast<double>(dataset.instances.size());
  return dataset;
}

}  // namespace visurf::tasks
