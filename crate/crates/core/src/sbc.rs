//! A small synthetic bytecode (SBC) with a linear-sweep CFG recoverer and
//! a seeded program generator.
//!
//! Every instruction is a 4-byte record: one opcode byte followed by a
//! 24-bit big-endian operand. Control-flow opcodes (`JMP`, `BR`, `CALL`)
//! carry a target instruction index; all others must have a zero operand.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::exec::Execution;
use crate::graph::{BasicBlock, Cfg};

pub const RECORD_LEN: usize = 4;
pub const MAX_INSTRUCTIONS: usize = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Opcode {
    Nop = 0,
    Op = 1,
    Jmp = 2,
    Br = 3,
    Call = 4,
    Ret = 5,
    Halt = 6,
}

impl Opcode {
    pub fn from_byte(byte: u8) -> Option<Self> {
        Some(match byte {
            0 => Opcode::Nop,
            1 => Opcode::Op,
            2 => Opcode::Jmp,
            3 => Opcode::Br,
            4 => Opcode::Call,
            5 => Opcode::Ret,
            6 => Opcode::Halt,
            _ => return None,
        })
    }

    pub fn has_target(self) -> bool {
        matches!(self, Opcode::Jmp | Opcode::Br | Opcode::Call)
    }

    /// Ends a basic block.
    pub fn is_transfer(self) -> bool {
        !matches!(self, Opcode::Nop | Opcode::Op)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SbcInstruction {
    pub opcode: Opcode,
    pub target: Option<u32>,
}

impl SbcInstruction {
    pub fn plain(opcode: Opcode) -> Self {
        debug_assert!(!opcode.has_target());
        Self {
            opcode,
            target: None,
        }
    }

    pub fn branch(opcode: Opcode, target: u32) -> Self {
        debug_assert!(opcode.has_target());
        Self {
            opcode,
            target: Some(target),
        }
    }
}

/// A decoded program; execution starts at index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SbcProgram {
    instructions: Vec<SbcInstruction>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SbcError {
    #[error("program length {len} is not a positive multiple of {RECORD_LEN} bytes")]
    BadLength { len: usize },
    #[error("record {index}: unknown opcode {byte:#04x}")]
    UnknownOpcode { index: usize, byte: u8 },
    #[error("record {index}: target {target} is outside the program")]
    OutOfBounds { index: usize, target: u32 },
    #[error("record {index}: operand {operand} on an opcode that takes none")]
    UnexpectedOperand { index: usize, operand: u32 },
    #[error("record {index}: missing branch target")]
    MissingTarget { index: usize },
    #[error("program has {len} instructions; at most {MAX_INSTRUCTIONS} are addressable")]
    TooLong { len: usize },
}

impl SbcProgram {
    /// Validates operands against program bounds.
    pub fn new(instructions: Vec<SbcInstruction>) -> Result<Self, SbcError> {
        let len = instructions.len();
        if len == 0 {
            return Err(SbcError::BadLength { len: 0 });
        }
        if len > MAX_INSTRUCTIONS {
            return Err(SbcError::TooLong { len });
        }
        for (index, ins) in instructions.iter().enumerate() {
            match (ins.opcode.has_target(), ins.target) {
                (true, Some(target)) if target as usize >= len => {
                    return Err(SbcError::OutOfBounds { index, target })
                }
                (true, None) => return Err(SbcError::MissingTarget { index }),
                (false, Some(operand)) => {
                    return Err(SbcError::UnexpectedOperand { index, operand })
                }
                _ => {}
            }
        }
        Ok(Self { instructions })
    }

    pub fn instructions(&self) -> &[SbcInstruction] {
        &self.instructions
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.instructions.len() * RECORD_LEN);
        for ins in &self.instructions {
            let operand = ins.target.unwrap_or(0).to_be_bytes();
            out.push(ins.opcode as u8);
            out.extend_from_slice(&operand[1..]);
        }
        out
    }
}

pub fn decode(bytes: &[u8]) -> Result<SbcProgram, SbcError> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(SbcError::BadLength { len: bytes.len() });
    }
    let len = bytes.len() / RECORD_LEN;
    if len > MAX_INSTRUCTIONS {
        return Err(SbcError::TooLong { len });
    }
    let instructions = bytes
        .chunks_exact(RECORD_LEN)
        .enumerate()
        .map(|(index, rec)| {
            let opcode = Opcode::from_byte(rec[0]).ok_or(SbcError::UnknownOpcode {
                index,
                byte: rec[0],
            })?;
            let operand = u32::from_be_bytes([0, rec[1], rec[2], rec[3]]);
            let target = if opcode.has_target() {
                Some(operand)
            } else if operand != 0 {
                return Err(SbcError::UnexpectedOperand { index, operand });
            } else {
                None
            };
            Ok(SbcInstruction { opcode, target })
        })
        .collect::<Result<Vec<_>, _>>()?;
    SbcProgram::new(instructions)
}

/// Linear-sweep CFG recovery.
///
/// Leaders are index 0, every branch/jump/call target, and the successor
/// of every `BR` and `CALL`. A block runs from its first instruction to
/// the first control transfer or to the instruction before the next
/// leader, so code after a `RET`/`HALT`/`JMP` that nothing targets still
/// forms blocks of its own.
pub fn recover_cfg(program: &SbcProgram, sample_id: &str) -> Cfg {
    let code = program.instructions();
    let n = code.len();
    let mut leader = vec![false; n];
    leader[0] = true;
    for (i, ins) in code.iter().enumerate() {
        if let Some(t) = ins.target {
            leader[t as usize] = true;
        }
        if matches!(ins.opcode, Opcode::Br | Opcode::Call) && i + 1 < n {
            leader[i + 1] = true;
        }
    }

    let mut block_of = vec![0usize; n];
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 0..n {
        block_of[i] = spans.len();
        let ends = code[i].opcode.is_transfer() || i + 1 == n || leader[i + 1];
        if ends {
            spans.push((start, i));
            start = i + 1;
        }
    }

    let mut edges = Vec::new();
    for &(first, last) in &spans {
        let ins = code[last];
        let from = first as u64;
        let block_start = |idx: usize| spans[block_of[idx]].0 as u64;
        if let Some(t) = ins.target {
            edges.push((from, block_start(t as usize)));
        }
        let falls_through = !matches!(ins.opcode, Opcode::Jmp | Opcode::Ret | Opcode::Halt);
        if falls_through && last + 1 < n {
            edges.push((from, block_start(last + 1)));
        }
    }
    let blocks = spans
        .iter()
        .map(|&(first, last)| {
            let count = (last - first + 1) as u64;
            BasicBlock::new(first as u64, count * RECORD_LEN as u64, count)
        })
        .collect();
    Cfg::build(sample_id, blocks, &edges).expect("recovered blocks cover every edge endpoint")
}

/// Shape of generated programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    /// One densely branching region plus called helpers; a single component.
    Enmeshed,
    /// A long, sparsely branching main region followed by 1 to 7 function
    /// regions nothing reaches; 2 to 8 components.
    Fragmented,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Enmeshed => "enmeshed",
            Profile::Fragmented => "fragmented",
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enmeshed" => Ok(Profile::Enmeshed),
            "fragmented" => Ok(Profile::Fragmented),
            other => Err(format!(
                "unknown profile `{other}` (expected enmeshed or fragmented)"
            )),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How a region's units end.
#[derive(Clone, Copy)]
enum UnitExit {
    /// Branch to the unit with this region-local index; `units` means the
    /// region terminator.
    Branch(usize),
    /// Call the helper region with this index.
    Call(usize),
}

/// A straight-line region: units of `pad` OPs followed by one exit, then a
/// terminator instruction.
struct Region {
    pads: Vec<usize>,
    exits: Vec<UnitExit>,
    terminator: Opcode,
}

impl Region {
    fn len(&self) -> usize {
        self.pads.iter().map(|p| p + 1).sum::<usize>() + 1
    }

    fn random(rng: &mut ChaCha8Rng, units: usize, terminator: Opcode) -> Self {
        let pads = (0..units).map(|_| rng.gen_range(0..=2)).collect();
        Self {
            pads,
            exits: Vec::with_capacity(units),
            terminator,
        }
    }

    fn emit(&self, base: usize, helper_entries: &[usize], out: &mut Vec<SbcInstruction>) {
        let mut unit_start = Vec::with_capacity(self.pads.len() + 1);
        let mut at = base;
        for pad in &self.pads {
            unit_start.push(at);
            at += pad + 1;
        }
        unit_start.push(at);
        for (pad, exit) in self.pads.iter().zip(&self.exits) {
            out.extend(std::iter::repeat_n(SbcInstruction::plain(Opcode::Op), *pad));
            out.push(match *exit {
                UnitExit::Branch(u) => SbcInstruction::branch(Opcode::Br, unit_start[u] as u32),
                UnitExit::Call(h) => SbcInstruction::branch(Opcode::Call, helper_entries[h] as u32),
            });
        }
        out.push(SbcInstruction::plain(self.terminator));
    }
}

fn layout(main: Region, rest: Vec<Region>) -> SbcProgram {
    let mut bases = Vec::with_capacity(rest.len());
    let mut at = main.len();
    for r in &rest {
        bases.push(at);
        at += r.len();
    }
    let mut code = Vec::with_capacity(at);
    main.emit(0, &bases, &mut code);
    for (r, &base) in rest.iter().zip(&bases) {
        r.emit(base, &bases, &mut code);
    }
    SbcProgram::new(code).expect("generated targets stay in bounds")
}

/// A region whose branches land anywhere inside it.
fn dense_region(rng: &mut ChaCha8Rng, units: usize, terminator: Opcode) -> Region {
    let mut region = Region::random(rng, units, terminator);
    region.exits = (0..units)
        .map(|_| UnitExit::Branch(rng.gen_range(0..=units)))
        .collect();
    region
}

fn enmeshed(rng: &mut ChaCha8Rng) -> SbcProgram {
    let units = rng.gen_range(12..=30);
    let mut main = dense_region(rng, units, Opcode::Halt);
    let helper_count = rng.gen_range(0..=3);
    let helpers: Vec<Region> = (0..helper_count)
        .map(|_| {
            let n = rng.gen_range(3..=8);
            dense_region(rng, n, Opcode::Ret)
        })
        .collect();
    let mut call_sites: Vec<usize> = (0..units).collect();
    call_sites.shuffle(rng);
    for (h, &site) in call_sites.iter().take(helper_count).enumerate() {
        main.exits[site] = UnitExit::Call(h);
    }
    layout(main, helpers)
}

fn fragmented(rng: &mut ChaCha8Rng) -> SbcProgram {
    let units = rng.gen_range(60..=120);
    let mut main = Region::random(rng, units, Opcode::Halt);
    main.exits = (0..units)
        .map(|u| UnitExit::Branch((u + rng.gen_range(2..=3)).min(units)))
        .collect();
    let dead = rng.gen_range(1..=7);
    let regions = (0..dead)
        .map(|_| {
            let n = rng.gen_range(2..=8);
            dense_region(rng, n, Opcode::Ret)
        })
        .collect();
    layout(main, regions)
}

/// One program drawn from `profile` with its own seed.
pub fn generate_program(profile: Profile, seed: u64) -> SbcProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match profile {
        Profile::Enmeshed => enmeshed(&mut rng),
        Profile::Fragmented => fragmented(&mut rng),
    }
}

/// Seed used for the program at `index` in a corpus seeded with `seed`.
pub fn program_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add(index as u64)
}

/// `count` programs; program `i` is drawn with seed `seed + i`.
pub fn generate_corpus(count: usize, profile: Profile, seed: u64) -> Vec<SbcProgram> {
    generate_corpus_with(count, profile, seed, Execution::default())
}

pub fn generate_corpus_with(
    count: usize,
    profile: Profile,
    seed: u64,
    exec: Execution,
) -> Vec<SbcProgram> {
    exec.map_range(count, |i| generate_program(profile, program_seed(seed, i)))
}
