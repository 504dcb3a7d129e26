#pragma once

#include "gemzsl/classifier.hpp"
#include "gemzsl/config.hpp"
#include "gemzsl/data.hpp"
#include "gemzsl/encoders.hpp"
#include "gemzsl/error.hpp"
#include "gemzsl/gem.hpp"
#include "gemzsl/gradcheck.hpp"
#include "gemzsl/gradsuite.hpp"
#include "gemzsl/io.hpp"
#include "gemzsl/matching.hpp"
#include "gemzsl/metrics.hpp"
#include "gemzsl/model.hpp"
#include "gemzsl/ops.hpp"
#include "gemzsl/rng.hpp"
#include "gemzsl/tensor.hpp"
#include "gemzsl/train.hpp"
