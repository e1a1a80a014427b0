#pragma once

#include "voxworld/agent.hpp"
#include "voxworld/audio.hpp"
#include "voxworld/corpus.hpp"
#include "voxworld/dataset.hpp"
#include "voxworld/features.hpp"
#include "voxworld/fixture.hpp"
#include "voxworld/markers.hpp"
#include "voxworld/model.hpp"
#include "voxworld/pipeline.hpp"
#include "voxworld/world.hpp"
