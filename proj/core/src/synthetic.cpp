#include "s2r/synthetic.hpp"

#include <array>
#include <string>

#include "s2r/textcore.hpp"

namespace s2r::synth {

namespace {

struct Template {
  const char* query;
  const char* response;
};

// {a} and {b} draw from the same slot list; {t} is a time word.
struct Topic {
  std::vector<std::string> slots;
  std::vector<Template> templates;
};

const std::vector<std::string> kTimes = {"today", "yesterday", "tonight", "this weekend", "last week", "tomorrow"};

const std::vector<Topic>& topics() {
  static const std::vector<Topic> t = {
      {{"pizza", "sushi", "noodles", "curry", "tacos", "dumplings", "salad", "pasta"},
       {{"do you like {a}", "yes i really like {a} and {b} too"},
        {"what should i eat {t}", "maybe some {a} or {b} would be nice {t}"},
        {"is {a} good here", "the {a} here is great but try the {b}"}}},
      {{"park", "beach", "museum", "library", "mall", "station", "lake", "cinema"},
       {{"where did you go {t}", "i went to the {a} {t} with my friends"},
        {"want to meet at the {a}", "sure but the {b} is closer for me"},
        {"how do i get to the {a}", "walk past the {b} and the {a} is on the left"}}},
      {{"guitar", "piano", "tennis", "chess", "football", "painting", "yoga", "cooking"},
       {{"do you play {a}", "i play {a} every week but not {b}"},
        {"i started learning {a} {t}", "that is cool i tried {a} and {b} before"},
        {"is {a} hard to learn", "{a} takes time but it is easier than {b}"}}},
      {{"cats", "dogs", "rabbits", "birds", "horses", "fish", "turtles", "hamsters"},
       {{"do you have {a}", "i have two {a} and my sister has {b}"},
        {"are {a} good pets", "{a} are lovely but {b} need less care"}}},
  };
  return t;
}

std::string fill(const char* pattern, const std::string& a, const std::string& b, const std::string& t) {
  std::string out;
  for (const char* p = pattern; *p; ++p) {
    if (p[0] == '{' && p[1] && p[2] == '}') {
      out += p[1] == 'a' ? a : p[1] == 'b' ? b : t;
      p += 2;
    } else {
      out += *p;
    }
  }
  return out;
}

}  // namespace

std::vector<DialoguePair> toy_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<DialoguePair> pairs;
  pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& topic = topics()[uniform_index(rng, topics().size())];
    const auto& tpl = topic.templates[uniform_index(rng, topic.templates.size())];
    const std::size_t ia = uniform_index(rng, topic.slots.size());
    std::size_t ib = uniform_index(rng, topic.slots.size() - 1);
    if (ib >= ia) ++ib;
    const auto& t = kTimes[uniform_index(rng, kTimes.size())];
    DialoguePair p;
    p.id = static_cast<std::int64_t>(i);
    p.query = text::tokenize(fill(tpl.query, topic.slots[ia], topic.slots[ib], t));
    p.response = text::tokenize(fill(tpl.response, topic.slots[ia], topic.slots[ib], t));
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace s2r::synth
