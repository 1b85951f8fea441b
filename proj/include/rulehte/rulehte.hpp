#pragma once

#include "rulehte/basis.hpp"
#include "rulehte/boosting.hpp"
#include "rulehte/dataset.hpp"
#include "rulehte/error.hpp"
#include "rulehte/evaluation.hpp"
#include "rulehte/group_lasso.hpp"
#include "rulehte/model.hpp"
#include "rulehte/model_io.hpp"
#include "rulehte/rng.hpp"
#include "rulehte/rule.hpp"
#include "rulehte/simulation.hpp"
#include "rulehte/transform.hpp"
#include "rulehte/tree.hpp"
