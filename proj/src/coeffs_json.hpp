#pragma once

#include <json.hpp>

#include "faceanim/coeffs.hpp"

// JSON (de)serialization of coefficient records, shared between the sequence
// files and the dataset manifest.

namespace faceanim::motion {

nlohmann::ordered_json coeffs_to_json(const MotionCoeffs& c);
MotionCoeffs coeffs_from_json(const nlohmann::ordered_json& j, size_t frame);

}  // namespace faceanim::motion
