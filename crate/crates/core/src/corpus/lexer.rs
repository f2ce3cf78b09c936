//! Lexer-level tokenizer for the seven supported code languages.
//!
//! Recognized classes: whitespace, comments, string and char literals,
//! numbers, identifiers/keywords and single-char punctuation. C, C++ and C#
//! preprocessor lines are kept whole.

use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Language {
    Python,
    Java,
    JavaScript,
    C,
    Cpp,
    CSharp,
    Go,
}

impl Language {
    pub const ALL: [Language; 7] = [
        Language::Python,
        Language::Java,
        Language::JavaScript,
        Language::C,
        Language::Cpp,
        Language::CSharp,
        Language::Go,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Python => "python",
            Language::Java => "java",
            Language::JavaScript => "javascript",
            Language::C => "c",
            Language::Cpp => "cpp",
            Language::CSharp => "csharp",
            Language::Go => "go",
        }
    }

    fn hash_comments(self) -> bool {
        self == Language::Python
    }

    fn has_preprocessor(self) -> bool {
        matches!(self, Language::C | Language::Cpp | Language::CSharp)
    }

    fn dollar_idents(self) -> bool {
        matches!(self, Language::JavaScript | Language::Java)
    }

    pub fn is_keyword(self, word: &str) -> bool {
        let table: &[&str] = match self {
            Language::Python => PYTHON,
            Language::Java => JAVA,
            Language::JavaScript => JAVASCRIPT,
            Language::C => C,
            Language::Cpp => CPP,
            Language::CSharp => CSHARP,
            Language::Go => GO,
        };
        table.contains(&word) || (self == Language::Cpp && C.contains(&word))
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "python" | "py" => Language::Python,
            "java" => Language::Java,
            "javascript" | "js" => Language::JavaScript,
            "c" => Language::C,
            "cpp" | "c++" => Language::Cpp,
            "csharp" | "c#" | "cs" => Language::CSharp,
            "go" | "golang" => Language::Go,
            _ => return Err(Error::invalid(format!("unsupported language {s:?}"))),
        })
    }
}

// Keywords, literal words and a few names whose renaming would break
// ordinary programs outright (entry points, builtins).
const PYTHON: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in",
    "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
    "self", "cls", "super", "print", "len", "range", "int", "str", "float", "list", "dict", "set",
    "tuple", "bool", "object", "isinstance", "enumerate", "zip", "map", "filter", "sorted", "open",
    "min", "max", "sum", "abs", "input", "type", "Exception", "__name__", "__main__", "__init__",
];
const JAVA: &[&str] = &[
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally", "float",
    "for", "goto", "if", "implements", "import", "instanceof", "int", "interface", "long", "native",
    "new", "package", "private", "protected", "public", "return", "short", "static", "strictfp",
    "super", "switch", "synchronized", "this", "throw", "throws", "transient", "try", "void",
    "volatile", "while", "var", "record", "yield", "true", "false", "null", "main", "String",
    "System", "Object", "Math", "Integer", "Override",
];
const JAVASCRIPT: &[&str] = &[
    "break", "case", "catch", "class", "const", "continue", "debugger", "default", "delete", "do",
    "else", "export", "extends", "finally", "for", "function", "if", "import", "in", "instanceof",
    "let", "new", "return", "super", "switch", "this", "throw", "try", "typeof", "var", "void",
    "while", "with", "yield", "async", "await", "of", "static", "get", "set", "true", "false", "null",
    "undefined", "NaN", "Infinity", "console", "require", "module", "exports", "Math", "JSON",
    "Object", "Array", "String", "Number", "Promise",
];
const C: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum",
    "extern", "float", "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return",
    "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union", "unsigned", "void",
    "volatile", "while", "_Bool", "bool", "true", "false", "NULL", "size_t", "main", "printf",
    "scanf", "malloc", "free", "stdin", "stdout",
];
const CPP: &[&str] = &[
    "alignas", "alignof", "and", "and_eq", "asm", "bitand", "bitor", "catch", "char16_t", "char32_t",
    "class", "compl", "constexpr", "const_cast", "decltype", "delete", "dynamic_cast", "explicit",
    "export", "friend", "mutable", "namespace", "new", "noexcept", "not", "not_eq", "nullptr",
    "operator", "or", "or_eq", "private", "protected", "public", "reinterpret_cast", "static_assert",
    "static_cast", "template", "this", "thread_local", "throw", "try", "typeid", "typename", "using",
    "virtual", "wchar_t", "xor", "xor_eq", "override", "final", "std", "cout", "cin", "endl",
    "string", "vector",
];
const CSHARP: &[&str] = &[
    "abstract", "as", "base", "bool", "break", "byte", "case", "catch", "char", "checked", "class",
    "const", "continue", "decimal", "default", "delegate", "do", "double", "else", "enum", "event",
    "explicit", "extern", "false", "finally", "fixed", "float", "for", "foreach", "goto", "if",
    "implicit", "in", "int", "interface", "internal", "is", "lock", "long", "namespace", "new",
    "null", "object", "operator", "out", "override", "params", "private", "protected", "public",
    "readonly", "ref", "return", "sbyte", "sealed", "short", "sizeof", "stackalloc", "static",
    "string", "struct", "switch", "this", "throw", "true", "try", "typeof", "uint", "ulong",
    "unchecked", "unsafe", "ushort", "using", "virtual", "void", "volatile", "while", "var", "async",
    "await", "get", "set", "value", "yield", "nameof", "dynamic", "record", "init", "where",
    "partial", "Main", "Console", "System", "String", "Math",
];
const GO: &[&str] = &[
    "break", "case", "chan", "const", "continue", "default", "defer", "else", "fallthrough", "for",
    "func", "go", "goto", "if", "import", "interface", "map", "package", "range", "return", "select",
    "struct", "switch", "type", "var", "bool", "byte", "complex64", "complex128", "error", "float32",
    "float64", "int", "int8", "int16", "int32", "int64", "rune", "string", "uint", "uint8", "uint16",
    "uint32", "uint64", "uintptr", "true", "false", "iota", "nil", "append", "cap", "clear", "close",
    "complex", "copy", "delete", "imag", "len", "make", "max", "min", "new", "panic", "print",
    "println", "real", "recover", "main", "fmt",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Space,
    Comment,
    Preprocessor,
    Str,
    Number,
    Keyword,
    Ident,
    Punct,
}

/// A byte range of the source with its class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }
}

struct Lexer<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    lang: Language,
    i: usize,
}

impl Lexer<'_> {
    fn at(&self, k: usize) -> Option<char> {
        self.chars.get(k).map(|c| c.1)
    }

    fn offset(&self, k: usize) -> usize {
        self.chars.get(k).map_or(self.src.len(), |c| c.0)
    }

    fn starts_with(&self, k: usize, pat: &str) -> bool {
        self.src[self.offset(k)..].starts_with(pat)
    }

    fn line_start(&self, k: usize) -> bool {
        self.chars[..k].iter().rev().take_while(|c| c.1 != '\n').all(|c| c.1 == ' ' || c.1 == '\t')
    }

    fn to_eol(&self, mut k: usize, continuation: bool) -> usize {
        while let Some(c) = self.at(k) {
            if c == '\n' {
                if continuation && k > 0 && self.at(k - 1) == Some('\\') {
                    k += 1;
                    continue;
                }
                break;
            }
            k += 1;
        }
        k
    }

    /// End of a quoted literal opening at `k` with `quote`.
    fn quoted(&self, k: usize, quote: char, escapes: bool, multiline: bool) -> usize {
        let mut j = k + 1;
        while let Some(c) = self.at(j) {
            if escapes && c == '\\' {
                j += 2;
                continue;
            }
            if c == quote {
                if !escapes && self.at(j + 1) == Some(quote) && quote == '"' {
                    // verbatim "" escape
                    j += 2;
                    continue;
                }
                return j + 1;
            }
            if c == '\n' && !multiline {
                return j;
            }
            j += 1;
        }
        j
    }

    fn triple(&self, k: usize, quote: char) -> usize {
        let delim: String = std::iter::repeat_n(quote, 3).collect();
        let mut j = k + 3;
        while j < self.chars.len() {
            if self.at(j) == Some('\\') {
                j += 2;
                continue;
            }
            if self.starts_with(j, &delim) {
                return j + 3;
            }
            j += 1;
        }
        self.chars.len()
    }

    /// C++ raw string `R"delim( ... )delim"` with the `"` at `k`.
    fn raw_cpp(&self, k: usize) -> usize {
        let mut j = k + 1;
        let mut delim = String::new();
        while let Some(c) = self.at(j) {
            if c == '(' {
                break;
            }
            if c == '"' || c == '\n' || delim.len() > 16 {
                return self.quoted(k, '"', true, false);
            }
            delim.push(c);
            j += 1;
        }
        let close = format!("){delim}\"");
        while j < self.chars.len() {
            if self.starts_with(j, &close) {
                return j + close.chars().count();
            }
            j += 1;
        }
        self.chars.len()
    }

    /// String starting at `k` (a quote char), per-language rules.
    fn string_at(&self, k: usize, prefix: &str) -> usize {
        let q = self.at(k).expect("quote");
        let lang = self.lang;
        if (lang == Language::Python || (lang == Language::Java && q == '"')) && self.starts_with(k, &q.to_string().repeat(3)) {
            return self.triple(k, q);
        }
        if q == '`' {
            return self.quoted(k, '`', lang == Language::JavaScript, true);
        }
        let raw = match lang {
            Language::Python => prefix.to_ascii_lowercase().contains('r'),
            Language::CSharp => prefix.contains('@'),
            _ => false,
        };
        if lang == Language::Cpp && prefix.ends_with('R') {
            return self.raw_cpp(k);
        }
        if raw && lang == Language::CSharp {
            return self.quoted(k, '"', false, true);
        }
        if raw {
            // python raw strings still cannot end in an odd backslash run
            return self.quoted(k, q, true, false);
        }
        self.quoted(k, q, true, false)
    }

    fn is_string_prefix(&self, word: &str) -> bool {
        match self.lang {
            Language::Python => {
                word.len() <= 2
                    && word.chars().all(|c| "rRbBuUfF".contains(c))
                    && !(word.len() == 2 && word.chars().all(|c| "uU".contains(c)))
            }
            Language::Cpp | Language::C => matches!(word, "L" | "u" | "U" | "u8" | "R" | "LR" | "uR" | "UR" | "u8R"),
            _ => false,
        }
    }

    fn ident_start(&self, c: char) -> bool {
        c.is_alphabetic() || c == '_' || (c == '$' && self.lang.dollar_idents())
    }

    fn ident_continue(&self, c: char) -> bool {
        c.is_alphanumeric() || c == '_' || (c == '$' && self.lang.dollar_idents())
    }

    fn number_end(&self, k: usize) -> usize {
        let hex = self.starts_with(k, "0x") || self.starts_with(k, "0X");
        let mut j = k + 1;
        while let Some(c) = self.at(j) {
            let prev = self.at(j - 1).unwrap_or(' ');
            let exp = if hex { "pP" } else { "eE" };
            if c.is_alphanumeric() || c == '_' || c == '.' || ((c == '+' || c == '-') && exp.contains(prev)) {
                j += 1;
            } else {
                break;
            }
        }
        j
    }

    fn next(&mut self) -> Option<Token> {
        let k = self.i;
        let c = self.at(k)?;
        let lang = self.lang;
        let (kind, end) = if c.is_whitespace() {
            let mut j = k;
            while self.at(j).is_some_and(char::is_whitespace) {
                j += 1;
            }
            (TokenKind::Space, j)
        } else if c == '#' && lang.has_preprocessor() && self.line_start(k) {
            (TokenKind::Preprocessor, self.to_eol(k, true))
        } else if (c == '#' && lang.hash_comments()) || (!lang.hash_comments() && self.starts_with(k, "//")) {
            (TokenKind::Comment, self.to_eol(k, false))
        } else if !lang.hash_comments() && self.starts_with(k, "/*") {
            let mut j = k + 2;
            while j < self.chars.len() && !self.starts_with(j, "*/") {
                j += 1;
            }
            (TokenKind::Comment, (j + 2).min(self.chars.len()))
        } else if c == '"' || c == '\'' || (c == '`' && matches!(lang, Language::JavaScript | Language::Go)) {
            (TokenKind::Str, self.string_at(k, ""))
        } else if lang == Language::CSharp && (c == '@' || c == '$') {
            let mut j = k;
            while j < k + 2 && matches!(self.at(j), Some('@') | Some('$')) {
                j += 1;
            }
            if self.at(j) == Some('"') {
                let prefix: String = self.chars[k..j].iter().map(|c| c.1).collect();
                (TokenKind::Str, self.string_at(j, &prefix))
            } else {
                (TokenKind::Punct, k + 1)
            }
        } else if c.is_ascii_digit() || (c == '.' && self.at(k + 1).is_some_and(|d| d.is_ascii_digit())) {
            (TokenKind::Number, self.number_end(k))
        } else if self.ident_start(c) {
            let mut j = k + 1;
            while self.at(j).is_some_and(|c| self.ident_continue(c)) {
                j += 1;
            }
            let word = &self.src[self.offset(k)..self.offset(j)];
            if matches!(self.at(j), Some('"') | Some('\'')) && self.is_string_prefix(word) {
                (TokenKind::Str, self.string_at(j, word))
            } else if lang.is_keyword(word) {
                (TokenKind::Keyword, j)
            } else {
                (TokenKind::Ident, j)
            }
        } else {
            (TokenKind::Punct, k + 1)
        };
        self.i = end;
        Some(Token {
            kind,
            start: self.offset(k),
            end: self.offset(end),
        })
    }
}

/// Tokens covering the whole source in order; concatenating their texts
/// reproduces the input.
pub fn lex(src: &str, lang: Language) -> Vec<Token> {
    let mut lx = Lexer {
        src,
        chars: src.char_indices().collect(),
        lang,
        i: 0,
    };
    let mut out = Vec::new();
    while let Some(t) = lx.next() {
        out.push(t);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str, lang: Language) -> Vec<(TokenKind, &str)> {
        lex(src, lang)
            .into_iter()
            .filter(|t| t.kind != TokenKind::Space)
            .map(|t| (t.kind, t.text(src)))
            .collect()
    }

    #[test]
    fn c_statement() {
        use TokenKind::*;
        assert_eq!(
            kinds("int x = y + x;", Language::C),
            [(Keyword, "int"), (Ident, "x"), (Punct, "="), (Ident, "y"), (Punct, "+"), (Ident, "x"), (Punct, ";")]
        );
    }

    #[test]
    fn comments_and_strings_are_opaque() {
        let src = "s = f\"{x}\" # x here\nt = '''a\nb''' + r'\\d'";
        let toks = kinds(src, Language::Python);
        assert!(toks.contains(&(TokenKind::Str, "f\"{x}\"")));
        assert!(toks.contains(&(TokenKind::Comment, "# x here")));
        assert!(toks.contains(&(TokenKind::Str, "'''a\nb'''")));
        assert!(toks.contains(&(TokenKind::Str, "r'\\d'")));
    }

    #[test]
    fn preprocessor_lines_stay_whole() {
        let src = "#include <stdio.h>\n#define A(x) \\\n  (x)\nint a;";
        let toks = kinds(src, Language::C);
        assert_eq!(toks[0], (TokenKind::Preprocessor, "#include <stdio.h>"));
        assert_eq!(toks[1], (TokenKind::Preprocessor, "#define A(x) \\\n  (x)"));
    }

    #[test]
    fn special_literals() {
        let toks = kinds("auto s = R\"x(a\")x\"; auto t = u8\"q\";", Language::Cpp);
        assert!(toks.contains(&(TokenKind::Str, "R\"x(a\")x\"")));
        assert!(toks.contains(&(TokenKind::Str, "u8\"q\"")));
        let toks = kinds("var p = @\"C:\\a\"\"b\"; var q = $\"{x}\";", Language::CSharp);
        assert!(toks.contains(&(TokenKind::Str, "@\"C:\\a\"\"b\"")));
        assert!(toks.contains(&(TokenKind::Str, "$\"{x}\"")));
        let toks = kinds("s := `raw\nline`", Language::Go);
        assert!(toks.contains(&(TokenKind::Str, "`raw\nline`")));
    }

    #[test]
    fn numbers() {
        let toks = kinds("x = 1.5e-3 + 0x1F + .5", Language::JavaScript);
        let nums: Vec<&str> = toks.iter().filter(|t| t.0 == TokenKind::Number).map(|t| t.1).collect();
        assert_eq!(nums, ["1.5e-3", "0x1F", ".5"]);
    }

    #[test]
    fn lexing_covers_input() {
        for lang in Language::ALL {
            let src = "a /* b */ 'c' \"d\\\"\" // e\n #f 1.0 $g `h`";
            let joined: String = lex(src, lang).iter().map(|t| t.text(src)).collect();
            assert_eq!(joined, src, "{lang:?}");
        }
    }
}
