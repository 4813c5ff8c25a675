#pragma once

#include <memory>

#include "bnb/cards.hpp"
#include "bnb/default_cards_data.hpp"

namespace bnb {

// The bundled card database (data/cards.json), loaded once.
inline std::shared_ptr<const CardRegistry> default_registry() {
  static const auto registry = std::make_shared<const CardRegistry>(load_registry(kDefaultCardsJson));
  return registry;
}

}  // namespace bnb
