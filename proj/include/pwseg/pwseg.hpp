#pragma once

#include "pwseg/augment.hpp"
#include "pwseg/checkpoint.hpp"
#include "pwseg/dataset_io.hpp"
#include "pwseg/detector.hpp"
#include "pwseg/gradcheck.hpp"
#include "pwseg/maskgeom.hpp"
#include "pwseg/metrics.hpp"
#include "pwseg/protobank.hpp"
#include "pwseg/ranksim.hpp"
#include "pwseg/reliability.hpp"
#include "pwseg/rng.hpp"
#include "pwseg/runconfig.hpp"
#include "pwseg/segmodel.hpp"
#include "pwseg/synthdata.hpp"
#include "pwseg/tensor.hpp"
#include "pwseg/trainer.hpp"
