#include "reaching_defs.hpp"

#include <algorithm>
#include <set>

namespace tirtaint {

ClobberMap compute_clobbers(const Program& p) {
  ClobberMap m(p.functions.size());
  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t fi = 0; fi < p.functions.size(); fi++) {
      auto& cl = m[fi];
      auto add = [&](Register r) {
        if (!cl[r.index]) {
          cl[r.index] = true;
          changed = true;
        }
      };
      for (const auto& ins : p.functions[fi].instrs) {
        switch (ins.op) {
          case Opcode::Mov:
          case Opcode::Load:
          case Opcode::Add:
          case Opcode::Sub:
          case Opcode::And:
          case Opcode::Or:
          case Opcode::Xor:
            add(ins.dst->reg);
            break;
          case Opcode::Pop:
            add(ins.dst->reg);
            add(Register{kStackRegister});
            break;
          case Opcode::Push:
            add(Register{kStackRegister});
            break;
          case Opcode::Call:
            for (int r = 0; r < kNumRegisters; r++)
              if (m[ins.target][r]) add(Register{static_cast<uint8_t>(r)});
            break;
          default:
            break;
        }
      }
    }
  }
  return m;
}

RegEffects reg_effects(const Instruction& ins, const ClobberMap& clobbers) {
  RegEffects e;
  auto use = [&](Register r) { e.uses.push_back(r); };
  auto def = [&](Register r) { e.defs.push_back(r); };
  switch (ins.op) {
    case Opcode::Mov:
      if (ins.src->is_reg()) use(ins.src->reg);
      def(ins.dst->reg);
      break;
    case Opcode::Load:
      use(ins.src->reg);  // base register
      def(ins.dst->reg);
      break;
    case Opcode::Store:
      use(ins.dst->reg);  // base register
      if (ins.src->is_reg()) use(ins.src->reg);
      break;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Xor:
      use(ins.dst->reg);
      if (ins.src->is_reg()) use(ins.src->reg);
      def(ins.dst->reg);
      break;
    case Opcode::Cmp:
      use(ins.dst->reg);
      if (ins.src->is_reg()) use(ins.src->reg);
      break;
    case Opcode::Push:
      if (ins.src->is_reg()) use(ins.src->reg);
      use(Register{kStackRegister});
      def(Register{kStackRegister});
      break;
    case Opcode::Pop:
      use(Register{kStackRegister});
      def(ins.dst->reg);
      def(Register{kStackRegister});
      break;
    case Opcode::Call:
      for (int r = 0; r < kNumRegisters; r++)
        if (clobbers[ins.target][r]) def(Register{static_cast<uint8_t>(r)});
      break;
    case Opcode::Record:
      if (ins.dst) use(ins.dst->reg);
      break;
    case Opcode::TaintSource:
    case Opcode::TaintSink:
      if (ins.dst && (ins.dst->is_reg() || ins.dst->is_mem())) use(ins.dst->reg);
      break;
    default:
      break;
  }
  return e;
}

ReachingDefs::ReachingDefs(const Function& f, const FunctionCfg& cfg,
                           const ClobberMap& clobbers) {
  const uint32_t n = f.size();
  in_.assign(static_cast<size_t>(n) * kNumRegisters, {});

  // Per-block dataflow over definition-site sets per register; sets stay
  // tiny at this scale so plain sorted vectors are fine.
  using DefSet = std::vector<uint32_t>;
  auto merge = [](DefSet& into, const DefSet& from) {
    DefSet out;
    std::set_union(into.begin(), into.end(), from.begin(), from.end(),
                   std::back_inserter(out));
    bool changed = out.size() != into.size();
    into = std::move(out);
    return changed;
  };

  const uint32_t nb = static_cast<uint32_t>(cfg.blocks.size());
  std::vector<std::array<DefSet, kNumRegisters>> block_in(nb), block_out(nb);
  for (int r = 0; r < kNumRegisters; r++) block_in[0][r] = {kEntryDef};

  bool changed = true;
  while (changed) {
    changed = false;
    for (uint32_t b = 0; b < nb; b++) {
      std::array<DefSet, kNumRegisters> cur = block_in[b];
      for (uint32_t i = cfg.blocks[b].leader; i <= cfg.blocks[b].last; i++) {
        RegEffects eff = reg_effects(f.at(i), clobbers);
        for (Register d : eff.defs) cur[d.index] = {i};
      }
      for (int r = 0; r < kNumRegisters; r++)
        if (merge(block_out[b][r], cur[r])) changed = true;
      uint32_t base = cfg.blocks.front().id;
      for (uint32_t s : cfg.blocks[b].succs) {
        uint32_t sl = s - base;
        for (int r = 0; r < kNumRegisters; r++)
          if (merge(block_in[sl][r], block_out[b][r])) changed = true;
      }
    }
  }

  for (uint32_t b = 0; b < nb; b++) {
    std::array<DefSet, kNumRegisters> cur = block_in[b];
    for (uint32_t i = cfg.blocks[b].leader; i <= cfg.blocks[b].last; i++) {
      for (int r = 0; r < kNumRegisters; r++)
        in_[(i - 1) * kNumRegisters + r] = cur[r];
      RegEffects eff = reg_effects(f.at(i), clobbers);
      for (Register d : eff.defs) cur[d.index] = {i};
    }
  }
}

}  // namespace tirtaint
