#pragma once

#include "adam.hpp"
#include "cli.hpp"
#include "dataset.hpp"
#include "gradcheck.hpp"
#include "io.hpp"
#include "layers.hpp"
#include "multispace.hpp"
#include "network.hpp"
#include "objective.hpp"
#include "pipeline.hpp"
#include "random.hpp"
#include "tensor.hpp"
