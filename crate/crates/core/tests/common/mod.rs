#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;

use ooosim_core::benchkit::{Assembler, DATA_BASE, STACK_TOP, TEXT_BASE};
use ooosim_core::isa::{Program, Segment};

pub fn program_from(asm: Assembler) -> Program {
    program_with_data(asm, Vec::new())
}

pub fn program_with_data(asm: Assembler, data: Vec<u8>) -> Program {
    let mut segs = vec![Segment {
        base: TEXT_BASE,
        bytes: asm.finish_bytes().unwrap(),
    }];
    if !data.is_empty() {
        segs.push(Segment {
            base: DATA_BASE,
            bytes: data,
        });
    }
    Program::new(segs, TEXT_BASE, STACK_TOP).unwrap()
}

/// One instruction's life as read back from a Kanata log.
#[derive(Debug, Clone, Default)]
pub struct Life {
    pub label: String,
    pub begins: Vec<(String, u64)>,
    pub retire: Option<(u64, u8)>,
}

impl Life {
    pub fn begin(&self, stage: &str) -> Option<u64> {
        self.begins
            .iter()
            .rev()
            .find(|(s, _)| s == stage)
            .map(|&(_, c)| c)
    }

    pub fn committed(&self) -> bool {
        matches!(self.retire, Some((_, 0)))
    }
}

/// Independent reader of the log format, keyed by instruction id.
pub fn parse_lives(log: &str) -> BTreeMap<u64, Life> {
    let mut cycle = 0u64;
    let mut lives: BTreeMap<u64, Life> = BTreeMap::new();
    for line in log.lines().skip(1) {
        let f: Vec<&str> = line.split('\t').collect();
        match f[0] {
            "C=" => cycle = f[1].parse().unwrap(),
            "C" => cycle += f[1].parse::<u64>().unwrap(),
            "I" => {
                lives.insert(f[1].parse().unwrap(), Life::default());
            }
            "L" => lives.get_mut(&f[1].parse().unwrap()).unwrap().label = f[3].to_string(),
            "S" => lives
                .get_mut(&f[1].parse().unwrap())
                .unwrap()
                .begins
                .push((f[3].to_string(), cycle)),
            "R" => {
                lives.get_mut(&f[1].parse().unwrap()).unwrap().retire =
                    Some((cycle, f[3].parse().unwrap()))
            }
            _ => {}
        }
    }
    lives
}

/// Committed lives in program order.
pub fn committed_lives(log: &str) -> Vec<Life> {
    parse_lives(log)
        .into_values()
        .filter(Life::committed)
        .collect()
}
