// Sizes along the normalizer chain for Z/m.
#include <cstdio>

#include "haarlab/finite.hpp"

using namespace haarlab;

int main() {
  std::printf(" m  |Trans| |AF| |N(Trans)| |N(AF)| |E(AF)|\n");
  for (int m = 2; m <= 8; ++m) {
    const auto c = finite_chain(FiniteGroupTable::cyclic(m));
    std::printf("%2d %7zu %4zu %10zu %7zu %7zu%s\n", m, c.translations.size(), c.affine.size(),
                c.normalizer_of_translations.size(), c.normalizer_of_affine.size(), c.translation_normalizer.size(),
                c.all_equal() ? "" : "  <- larger than AF");
  }
  const auto c8 = finite_chain(FiniteGroupTable::cyclic(8));
  for (const auto& f : c8.normalizer_of_affine.minus(c8.affine)) {
    std::printf("outside AF(Z/8):");
    for (int x = 0; x < 8; ++x) std::printf(" %d", f(x));
    std::printf("\n");
    break;
  }
}
