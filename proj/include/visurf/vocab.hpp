#pragma once

#include <string>

#include "visurf/errors.hpp"

namespace visurf {

/**
 * Token inventory: seven structural tokens plus K item tokens, ids dense in
 * [0, V) with V = K + 7. EOS is an ordinary vocabulary entry, so it is a
 * valid continuation at every position.
 */
struct Vocab {
  static constexpr int kThinkOpen = 0;
  static constexpr int kThinkClose = 1;
  static constexpr int kAnsOpen = 2;
  static constexpr int kAnsClose = 3;
  static constexpr int kSep = 4;
  static constexpr int kEmpty = 5;
  static constexpr int kEos = 6;
  static constexpr int kNumStructural = 7;

  int n_items = 6;

  explicit Vocab(int items = 6) : n_items(items) {
    if (items < 0) throw ConfigError("vocab: item count must be nonnegative");
  }

  int size() const { return kNumStructural + n_items; }

  static constexpr int item(int index) { return kNumStructural + index; }
  bool is_item(int id) const { return id >= kNumStructural && id < size(); }
  int item_index(int id) const { return id - kNumStructural; }

  std::string token_name(int id) const {
    switch (id) {
      case kThinkOpen: return "<think>";
      case kThinkClose: return "</think>";
      case kAnsOpen: return "<answer>";
      case kAnsClose: return "</answer>";
      case kSep: return ",";
      case kEmpty: return "_";
      case kEos: return "<eos>";
      default:
        if (is_item(id)) return "item" + std::to_string(item_index(id));
        return "<bad:" + std::to_string(id) + ">";
    }
  }
};

}  // namespace visurf
