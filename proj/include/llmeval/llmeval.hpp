#pragma once

#include "llmeval/error.hpp"
#include "llmeval/text.hpp"
#include "llmeval/ahp.hpp"
#include "llmeval/scoring.hpp"
#include "llmeval/judge.hpp"
#include "llmeval/judge_http.hpp"
#include "llmeval/corpus.hpp"
#include "llmeval/service.hpp"
#include "llmeval/http_api.hpp"
