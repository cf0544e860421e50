#pragma once

#include "vfr/augmentation.hpp"
#include "vfr/classifier.hpp"
#include "vfr/discovery.hpp"
#include "vfr/error.hpp"
#include "vfr/evaluation.hpp"
#include "vfr/grounding.hpp"
#include "vfr/hashing.hpp"
#include "vfr/image.hpp"
#include "vfr/prompt_pack.hpp"
#include "vfr/providers/cache.hpp"
#include "vfr/providers/counting.hpp"
#include "vfr/providers/http.hpp"
#include "vfr/providers/interfaces.hpp"
#include "vfr/providers/mock.hpp"
#include "vfr/refinement.hpp"
#include "vfr/runner/artifacts.hpp"
#include "vfr/runner/config.hpp"
#include "vfr/runner/manifest.hpp"
#include "vfr/runner/pipeline.hpp"
#include "vfr/runner/providers.hpp"
#include "vfr/vector_core.hpp"
