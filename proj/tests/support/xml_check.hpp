#pragma once

// Minimal well-formedness check for generated XML: balanced element tags,
// quoted attributes, escaped text. Enough for the SVG this project writes.

#include <string>
#include <vector>

namespace xmlcheck {

inline bool well_formed(const std::string& s, std::string* why = nullptr) {
    auto fail = [&](const std::string& m) {
        if (why != nullptr) *why = m;
        return false;
    };
    std::vector<std::string> stack;
    std::size_t i = 0;
    bool root_seen = false;
    while (i < s.size()) {
        if (s[i] != '<') {
            if (s[i] == '&') {
                const auto semi = s.find(';', i);
                if (semi == std::string::npos) return fail("bare &");
                const std::string ent = s.substr(i, semi - i + 1);
                if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") {
                    return fail("unknown entity " + ent);
                }
            }
            if (s[i] == '>') return fail("stray >");
            if (stack.empty() && root_seen && s[i] != '\n' && s[i] != ' ') return fail("text after root");
            ++i;
            continue;
        }
        // Find the closing '>' outside quotes.
        std::size_t j = i + 1;
        char quote = 0;
        for (; j < s.size(); ++j) {
            if (quote != 0) {
                if (s[j] == quote) quote = 0;
                else if (s[j] == '<') return fail("< inside attribute");
            } else if (s[j] == '"' || s[j] == '\'') {
                quote = s[j];
            } else if (s[j] == '>') {
                break;
            }
        }
        if (j >= s.size()) return fail("unterminated tag");
        const std::string tag = s.substr(i + 1, j - i - 1);
        i = j + 1;
        if (tag.empty()) return fail("empty tag");
        if (tag[0] == '?') continue;
        if (tag[0] == '/') {
            const std::string name = tag.substr(1);
            if (stack.empty() || stack.back() != name) return fail("mismatched </" + name + ">");
            stack.pop_back();
            continue;
        }
        const std::string name = tag.substr(0, tag.find_first_of(" \t\n/"));
        if (stack.empty()) {
            if (root_seen) return fail("second root element");
            root_seen = true;
        }
        if (tag.back() != '/') stack.push_back(name);
    }
    if (!stack.empty()) return fail("unclosed <" + stack.back() + ">");
    return root_seen ? true : fail("no root element");
}

} // namespace xmlcheck
