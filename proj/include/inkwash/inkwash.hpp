#pragma once

#include "inkwash/error.hpp"
#include "inkwash/feature_net.hpp"
#include "inkwash/filters.hpp"
#include "inkwash/image_io.hpp"
#include "inkwash/losses.hpp"
#include "inkwash/optimizer.hpp"
#include "inkwash/tensor.hpp"
#include "inkwash/weights.hpp"
