//! Seeded synthetic corpora and vocabularies for desk-scale experiments.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Language, Sample, Splits};
use crate::tokenizers::bpe::byte_to_char;
use crate::tokenizers::Vocab;
use crate::Result;

/// Ids at or above this belong to machine-written documents.
pub const CLASS_BOUNDARY: u32 = 500;
pub const SYNTH_VOCAB: u32 = 1000;

/// `[PAD] [UNK] [CLS] [SEP]` then one word `t<id>` for every remaining id.
pub fn tiny_wordpiece_vocab() -> Vocab {
    let mut pieces: Vec<String> = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"].map(String::from).to_vec();
    pieces.extend((4..SYNTH_VOCAB).map(|i| format!("t{i}")));
    Vocab::wordpiece(pieces, false).expect("static vocabulary is valid")
}

/// Words drawn from the id range of `label`; specials `[0, 4)` are never drawn.
pub fn disjoint_text(rng: &mut impl Rng, label: u8, len: usize) -> String {
    let range = if label == 1 { CLASS_BOUNDARY..SYNTH_VOCAB } else { 4..CLASS_BOUNDARY };
    let words: Vec<String> = (0..len).map(|_| format!("t{}", rng.random_range(range.clone()))).collect();
    words.join(" ")
}

/// `n` documents of 40–80 words, alternating labels.
pub fn disjoint_corpus(n: usize, seed: u64, prefix: &str) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let len = rng.random_range(40..=80);
            Sample {
                id: format!("{prefix}-{i:05}"),
                text: disjoint_text(&mut rng, label, len),
                language: "synthetic".into(),
                label,
                source: "disjoint-vocabulary".into(),
                generator: (label == 1).then(|| "synthetic".to_string()),
            }
        })
        .collect()
}

/// Train/dev/test of the disjoint-vocabulary task.
pub fn disjoint_task(train: usize, dev: usize, test: usize, seed: u64) -> Splits {
    Splits {
        train: disjoint_corpus(train, seed, "train"),
        dev: disjoint_corpus(dev, seed.wrapping_add(1), "dev"),
        test: disjoint_corpus(test, seed.wrapping_add(2), "test"),
    }
}

const CODE_WORDS: &[&str] = &[
    "def", "return", "for", "in", "if", "else", "while", "int", "void", "func", "function", "const",
    "let", "var", "public", "static", "class", "include", "package", "import", "using", "namespace",
    "std", "string", "total", "result", "value", "values", "count", "item", "index", "number", "sum",
    "data", "input", "output", "print", "printf", "println", "range", "len", "length", "size",
    "calculate", "compute", "process", "filter", "element", "current", "running", "accumulated",
    "main", "System", "Console", "WriteLine", "fmt", "Println", "console", "log", "self", "auto",
    "vector", "list", "List", "new", "true", "false", "null", "nil",
];

/// Byte-level BPE vocabulary: specials, the 256 byte symbols, then
/// hand-built left-to-right merges spelling common code words (with and
/// without a leading space).
pub fn code_bpe_vocab() -> Vocab {
    let mut map: HashMap<String, u32> = HashMap::new();
    for s in ["<s>", "</s>", "<pad>", "<unk>"] {
        let n = map.len() as u32;
        map.insert(s.into(), n);
    }
    for b in 0..=255u8 {
        let n = map.len() as u32;
        map.insert(byte_to_char(b).to_string(), n);
    }
    let mut merges: Vec<(String, String)> = Vec::new();
    let space = byte_to_char(b' ').to_string();
    let mut add = |left: String, right: String, map: &mut HashMap<String, u32>| {
        let joined = format!("{left}{right}");
        if !map.contains_key(&joined) {
            let n = map.len() as u32;
            map.insert(joined, n);
            merges.push((left, right));
        }
    };
    for indent in [2usize, 4] {
        let mut acc = space.clone();
        for _ in 1..indent {
            add(acc.clone(), space.clone(), &mut map);
            acc.push_str(&space);
        }
    }
    for word in CODE_WORDS {
        for lead in ["", space.as_str()] {
            let mut acc = lead.to_string();
            for c in word.chars() {
                let sym = c.to_string();
                if acc.is_empty() {
                    acc = sym;
                    continue;
                }
                add(acc.clone(), sym.clone(), &mut map);
                acc.push_str(&sym);
            }
        }
    }
    Vocab::byte_bpe(map, merges).expect("merges are built from existing symbols")
}

struct Style {
    machine: bool,
    indent: &'static str,
    op: &'static str,
}

struct Names {
    func: &'static str,
    arr: &'static str,
    acc: &'static str,
    item: &'static str,
}

const MACHINE_NAMES: [&[&str]; 4] = [
    &["calculate_total", "compute_sum", "process_values", "filter_and_sum", "aggregate_items"],
    &["values", "input_list", "numbers", "data_items"],
    &["total", "result", "accumulated_sum", "running_total"],
    &["value", "element", "current_item", "number"],
];
const HUMAN_NAMES: [&[&str]; 4] = [
    &["f", "go2", "solve", "calc", "sm"],
    &["a", "l", "xs", "arr"],
    &["s", "r", "t", "acc"],
    &["x", "v", "e", "it"],
];
const COMMENTS: &[&str] = &[
    "Iterate over every element and accumulate the matching values",
    "Compute the sum of all values divisible by the given factor",
    "Initialize the accumulator before processing the input",
    "Return the final accumulated result to the caller",
];

fn render(lang: Language, n: &Names, st: &Style, k: u32, comment: &str) -> String {
    let (i, o) = (st.indent, st.op);
    let cm = |prefix: &str| if st.machine { format!("{prefix} {comment}\n") } else { String::new() };
    let (f, a, s, x) = (n.func, n.arr, n.acc, n.item);
    match lang {
        Language::Python => format!(
            "def {f}({a}):\n{c}{i}{s}{o}={o}0\n{i}for {x} in {a}:\n{i}{i}if {x}{o}%{o}{k}{o}=={o}0:\n{i}{i}{i}{s}{o}+={o}{x}\n{i}return {s}\n",
            c = if st.machine { format!("{i}\"\"\"{comment}.\"\"\"\n") } else { String::new() },
        ),
        Language::Java => format!(
            "{c}public static int {f}(int[] {a}) {{\n{i}int {s}{o}={o}0;\n{i}for (int {x} : {a}) {{\n{i}{i}if ({x}{o}%{o}{k}{o}=={o}0) {{\n{i}{i}{i}{s}{o}+={o}{x};\n{i}{i}}}\n{i}}}\n{i}return {s};\n}}\n",
            c = cm("//"),
        ),
        Language::JavaScript => format!(
            "{c}function {f}({a}) {{\n{i}let {s}{o}={o}0;\n{i}for (const {x} of {a}) {{\n{i}{i}if ({x}{o}%{o}{k}{o}==={o}0) {{\n{i}{i}{i}{s}{o}+={o}{x};\n{i}{i}}}\n{i}}}\n{i}return {s};\n}}\n",
            c = cm("//"),
        ),
        Language::C => format!(
            "{c}int {f}(int *{a}, int {x}_n) {{\n{i}int {s}{o}={o}0;\n{i}for (int {x}{o}={o}0; {x}{o}<{o}{x}_n; {x}++) {{\n{i}{i}if ({a}[{x}]{o}%{o}{k}{o}=={o}0) {{\n{i}{i}{i}{s}{o}+={o}{a}[{x}];\n{i}{i}}}\n{i}}}\n{i}return {s};\n}}\n",
            c = cm("//"),
        ),
        Language::Cpp => format!(
            "{c}int {f}(const std::vector<int>& {a}) {{\n{i}int {s}{o}={o}0;\n{i}for (auto {x} : {a}) {{\n{i}{i}if ({x}{o}%{o}{k}{o}=={o}0) {{\n{i}{i}{i}{s}{o}+={o}{x};\n{i}{i}}}\n{i}}}\n{i}return {s};\n}}\n",
            c = cm("//"),
        ),
        Language::CSharp => format!(
            "{c}public static int {f}(int[] {a}) {{\n{i}int {s}{o}={o}0;\n{i}foreach (var {x} in {a}) {{\n{i}{i}if ({x}{o}%{o}{k}{o}=={o}0) {{\n{i}{i}{i}{s}{o}+={o}{x};\n{i}{i}}}\n{i}}}\n{i}return {s};\n}}\n",
            c = cm("///"),
        ),
        Language::Go => format!(
            "{c}func {f}({a} []int) int {{\n{i}{s}{o}:={o}0\n{i}for _, {x} := range {a} {{\n{i}{i}if {x}{o}%{o}{k}{o}=={o}0 {{\n{i}{i}{i}{s}{o}+={o}{x}\n{i}{i}}}\n{i}}}\n{i}return {s}\n}}\n",
            c = cm("//"),
        ),
    }
}

/// `per_class` human and `per_class` machine functions for each of the seven
/// languages. The two styles differ in naming, spacing, indentation and
/// comments; the underlying logic is shared.
pub fn code_corpus(per_class: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for lang in Language::ALL {
        for label in [0u8, 1] {
            for i in 0..per_class {
                let machine = label == 1;
                let table = if machine { &MACHINE_NAMES } else { &HUMAN_NAMES };
                let mut pick = |k: usize| *table[k].choose(&mut rng).expect("non-empty");
                let names = Names {
                    func: pick(0),
                    arr: pick(1),
                    acc: pick(2),
                    item: pick(3),
                };
                let style = if machine {
                    Style { machine, indent: "    ", op: " " }
                } else {
                    Style {
                        machine,
                        indent: if rng.random_bool(0.5) { "\t" } else { "  " },
                        op: if rng.random_bool(0.7) { "" } else { " " },
                    }
                };
                let k = rng.random_range(2..10);
                let comment = COMMENTS.choose(&mut rng).expect("non-empty");
                let mut text = render(lang, &names, &style, k, comment);
                if !machine && rng.random_bool(0.3) {
                    text.push('\n');
                }
                out.push(Sample {
                    id: format!("{}-{label}-{i:04}", lang.as_str()),
                    text,
                    language: lang.as_str().into(),
                    label,
                    source: "synthetic-code".into(),
                    generator: machine.then(|| "template".to_string()),
                });
            }
        }
    }
    out
}

/// Checks that a generated vocabulary fits an encoder of `vocab_size`.
pub fn fits(vocab: &Vocab, vocab_size: usize) -> Result<()> {
    if vocab.size() > vocab_size {
        return Err(crate::Error::invalid(format!(
            "vocabulary of {} exceeds encoder size {vocab_size}",
            vocab.size()
        )));
    }
    Ok(())
}
