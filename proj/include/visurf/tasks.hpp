#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "visurf/policy.hpp"

namespace visurf::tasks {

/**
 * Synthetic set-selection tasks. Each task asks for a subset of the K item
 * tokens; the correct answer may be empty ("non-object" instances, answered
 * with an empty list). The context class is a deterministic function of the
 * (family, label) pair, so every dataset is learnable by a policy that
 * conditions only on the class.
 *
 * The two families deliberately reuse the same class ids with partially
 * conflicting labels: POST_TRAIN redefines class 0 as the empty answer and
 * swaps one item in the top two classes. For a table policy whose parameters
 * are siloed per class, this shared-class conflict is the only channel
 * through which post-training can damage previously learned behavior, which
 * is exactly what the retention probe measures.
 */
enum class TaskFamily { kPostTrain, kPretrainHeld };

const char* family_name(TaskFamily family);
TaskFamily family_from_name(const std::string& name);

struct TaskInstance {
  int64_t id = 0;
  int context = 0;
  std::vector<int> gt_items;  // sorted item indices in [0, K)
  TaskFamily family = TaskFamily::kPostTrain;

  bool is_non_object() const { return gt_items.empty(); }
};

struct Dataset {
  std::vector<TaskInstance> instances;
  double non_object_fraction = 0.0;
  uint64_t seed = 0;
};

// The class-to-label map shared by generators and experiment protocols.
std::vector<int> context_gt(TaskFamily family, int context, int n_contexts, int n_items);

// Class id carrying the empty answer in the POST_TRAIN family.
constexpr int kNonObjectContext = 0;

/// n instances of one family with exactly round(n * non_object_fraction)
/// non-object instances, uniformly shuffled. Ids run from id_offset so
/// separately generated splits stay disjoint by id.
Dataset generate_dataset(int n, double non_object_fraction, uint64_t seed,
                         TaskFamily family = TaskFamily::kPostTrain, int n_contexts = 8,
                         int n_items = 6, int64_t id_offset = 0);

/// Context-stratified split with disjoint ids; second element is the
/// evaluation part with round(count * eval_fraction) instances per class.
std::pair<Dataset, Dataset> split_train_eval(const Dataset& dataset, double eval_fraction,
                                             uint64_t seed);

/**
 * One of the four interchangeable surface forms of a label: item order
 * (ascending / descending) crossed with separator usage. All four decode to
 * the same item set.
 */
struct SerializationVariant {
  bool ascending = true;
  bool use_sep = true;
};

// Fixed enumeration order; ties in canonicalize_label resolve to the
// earliest entry, so (ASC, sep) wins among equals.
inline constexpr std::array<SerializationVariant, 4> kVariantOrder{
    {{true, true}, {true, false}, {false, true}, {false, false}}};

/// ANS_OPEN .. ANS_CLOSE EOS with items in variant order and SEP between
/// items iff use_sep. Empty sets serialize as ANS_OPEN ANS_CLOSE EOS. Labels
/// never carry a think block.
TokenSequence serialize_label(const std::vector<int>& gt_items, SerializationVariant variant);

/// The serialization variant with maximal log-probability under the given
/// policy (strict argmax over kVariantOrder). This is the "match the
/// policy's preferred output style" alignment step.
TokenSequence canonicalize_label(const std::vector<int>& gt_items, const TabularPolicy& policy,
                                 int context);

/**
 * Parse of a (possibly malformed) emitted sequence.
 *
 * format_ok: the whole sequence matches
 *     [THINK_OPEN body THINK_CLOSE] ANS_OPEN items-with-optional-SEPs
 *     ANS_CLOSE EOS
 * with the think block optional and its body free of structural tokens.
 *
 * items: best-effort extraction — the item tokens between the first
 * ANS_OPEN and the next ANS_CLOSE (sorted, deduplicated), regardless of
 * format_ok; nullopt when no such segment exists. Malformed input is a
 * value, not an error.
 */
struct DecodeResult {
  bool format_ok = false;
  bool has_think = false;
  std::optional<std::vector<int>> items;
};

DecodeResult decode_answer(const TokenSequence& seq);

// JSON Lines persistence: one instance per line with fields
// id, context, gt_items (sorted), family.
void save_jsonl(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_jsonl(const std::filesystem::path& path);

}  // namespace visurf::tasks
