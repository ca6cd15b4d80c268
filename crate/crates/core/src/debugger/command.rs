use std::fmt;

/// Debugger verbs the agent may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Step,
    Next,
    Return,
    Continue,
    Break,
    Print,
    PrettyPrint,
    WhatIs,
    Args,
    Locals,
    Globals,
    List,
    ListCurrent,
    LongList,
    W,
    Where,
    Restart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Arity {
    None,
    Optional,
    Required,
}

impl Verb {
    pub const ALL: [Verb; 17] = [
        Verb::Step,
        Verb::Next,
        Verb::Return,
        Verb::Continue,
        Verb::Break,
        Verb::Print,
        Verb::PrettyPrint,
        Verb::WhatIs,
        Verb::Args,
        Verb::Locals,
        Verb::Globals,
        Verb::List,
        Verb::ListCurrent,
        Verb::LongList,
        Verb::W,
        Verb::Where,
        Verb::Restart,
    ];

    /// Wire spelling, identical to what the agent types.
    pub fn as_str(self) -> &'static str {
        match self {
            Verb::Step => "s",
            Verb::Next => "n",
            Verb::Return => "r",
            Verb::Continue => "c",
            Verb::Break => "b",
            Verb::Print => "p",
            Verb::PrettyPrint => "pp",
            Verb::WhatIs => "whatis",
            Verb::Args => "args",
            Verb::Locals => "locals()",
            Verb::Globals => "globals()",
            Verb::List => "l",
            Verb::ListCurrent => "l .",
            Verb::LongList => "ll",
            Verb::W => "w",
            Verb::Where => "where",
            Verb::Restart => "restart",
        }
    }

    fn arity(self) -> Arity {
        match self {
            Verb::Break => Arity::Optional,
            Verb::Print | Verb::PrettyPrint | Verb::WhatIs => Arity::Required,
            _ => Arity::None,
        }
    }

    /// Commands that resume the debuggee.
    pub fn resumes(self) -> bool {
        matches!(
            self,
            Verb::Step | Verb::Next | Verb::Return | Verb::Continue | Verb::Restart
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebugCommand {
    pub verb: Verb,
    pub arg: Option<String>,
}

impl DebugCommand {
    /// Parses one command line. Only whitelisted verbs with a fitting
    /// argument shape are accepted.
    pub fn parse(input: &str) -> Result<Self, String> {
        let line = input.trim();
        if line.is_empty() {
            return Err(rejection(input));
        }
        if line == "l ." {
            return Ok(DebugCommand {
                verb: Verb::ListCurrent,
                arg: None,
            });
        }
        let (head, rest) = match line.split_once(char::is_whitespace) {
            Some((h, r)) => (h, Some(r.trim()).filter(|r| !r.is_empty())),
            None => (line, None),
        };
        let verb = Verb::ALL
            .into_iter()
            .filter(|v| *v != Verb::ListCurrent)
            .find(|v| v.as_str() == head)
            .ok_or_else(|| rejection(input))?;
        match (verb.arity(), rest) {
            (Arity::None, Some(_)) => Err(format!("Command `{}` takes no argument.", verb.as_str())),
            (Arity::Required, None) => Err(format!(
                "Command `{}` needs an expression, e.g. `{} x`.",
                verb.as_str(),
                verb.as_str()
            )),
            (_, arg) => Ok(DebugCommand {
                verb,
                arg: arg.map(str::to_string),
            }),
        }
    }
}

impl fmt::Display for DebugCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.arg {
            Some(a) => write!(f, "{} {a}", self.verb.as_str()),
            None => f.write_str(self.verb.as_str()),
        }
    }
}

/// The allowed command forms, as listed to the agent.
pub fn whitelist_text() -> &'static str {
    "s, n, r, c, b [location[, condition]], p <expr>, pp <expr>, whatis <expr>, args, locals(), globals(), l, l ., ll, w, where, restart"
}

fn rejection(input: &str) -> String {
    format!(
        "Rejected: `{}` is not an allowed debugger command. Allowed commands: {}.",
        input.trim(),
        whitelist_text()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_listed_verb_parses() {
        for line in [
            "s",
            "n",
            "r",
            "c",
            "b",
            "b 42",
            "b utils.py:42",
            "b median",
            "b utils.py:42, x > 1",
            "p 1+1",
            "pp {'a': 1}",
            "whatis x",
            "args",
            "locals()",
            "globals()",
            "l",
            "l .",
            "ll",
            "w",
            "where",
            "restart",
        ] {
            let cmd = DebugCommand::parse(line).unwrap_or_else(|e| panic!("{line}: {e}"));
            assert_eq!(cmd.to_string(), line);
        }
    }

    #[test]
    fn other_verbs_are_rejected() {
        for line in [
            "q",
            "quit",
            "jump 3",
            "j 3",
            "!x = 1",
            "exit",
            "interact",
            "debug f()",
            "u",
            "d",
            "unt",
            "until",
            "run",
            "tbreak 3",
            "cl",
            "clear",
            "display x",
            "source x",
            "alias a b",
            "",
            "   ",
            "locals",
            "l 10",
            "s 2",
            "p",
            "restart now",
            "P 1",
            "import os",
        ] {
            assert!(DebugCommand::parse(line).is_err(), "{line:?} accepted");
        }
        assert!(DebugCommand::parse("q").unwrap_err().starts_with("Rejected: `q`"));
    }
}
