#pragma once

#include "concise/answer.hpp"
#include "concise/backend.hpp"
#include "concise/chain.hpp"
#include "concise/confidence.hpp"
#include "concise/config.hpp"
#include "concise/dataset.hpp"
#include "concise/errors.hpp"
#include "concise/http_backend.hpp"
#include "concise/jsonl.hpp"
#include "concise/metrics.hpp"
#include "concise/parallel.hpp"
#include "concise/pipeline.hpp"
#include "concise/records.hpp"
#include "concise/reflect.hpp"
#include "concise/rng.hpp"
#include "concise/scripted_backend.hpp"
#include "concise/text.hpp"
