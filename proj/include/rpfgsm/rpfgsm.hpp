#pragma once

#include "rpfgsm/attacks/baselines.hpp"
#include "rpfgsm/attacks/common.hpp"
#include "rpfgsm/attacks/fgsm.hpp"
#include "rpfgsm/attacks/target.hpp"
#include "rpfgsm/autodiff.hpp"
#include "rpfgsm/detector/detector.hpp"
#include "rpfgsm/eval/config.hpp"
#include "rpfgsm/eval/dataset.hpp"
#include "rpfgsm/eval/experiment.hpp"
#include "rpfgsm/eval/metrics.hpp"
#include "rpfgsm/eval/report.hpp"
#include "rpfgsm/image.hpp"
#include "rpfgsm/models/architecture.hpp"
#include "rpfgsm/models/gradient.hpp"
#include "rpfgsm/models/model.hpp"
#include "rpfgsm/models/serialize.hpp"
#include "rpfgsm/models/train.hpp"
#include "rpfgsm/random.hpp"
#include "rpfgsm/tensor.hpp"
#include "rpfgsm/transforms/color.hpp"
#include "rpfgsm/transforms/jpeg.hpp"
#include "rpfgsm/transforms/spec.hpp"
#include "rpfgsm/transforms/transforms.hpp"
