#pragma once

#include "uvnmt/corpus.hpp"
#include "uvnmt/errors.hpp"
#include "uvnmt/evaluation.hpp"
#include "uvnmt/inference.hpp"
#include "uvnmt/io.hpp"
#include "uvnmt/model.hpp"
#include "uvnmt/rng.hpp"
#include "uvnmt/tensor.hpp"
#include "uvnmt/training.hpp"
