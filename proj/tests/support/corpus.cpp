#include "support/corpus.hpp"
