//! Command-line front end mirroring the `swipl` flags the driver uses.

use crate::engine::Machine;
use crate::error::Flow;
use crate::reader::parse_term_text;

const STACK_BYTES: usize = 64 * 1024 * 1024;

#[derive(Debug, Default, PartialEq)]
pub struct Options {
    pub quiet: bool,
    pub goals: Vec<String>,
    pub toplevel: Option<String>,
    pub files: Vec<String>,
    pub version: bool,
}

pub fn parse_args(args: &[String]) -> Result<Options, String> {
    let mut options = Options::default();
    let mut iter = args.iter();
    while let Some(arg) = iter.next() {
        match arg.as_str() {
            "-q" | "--quiet" => options.quiet = true,
            "--version" | "-v" => options.version = true,
            "-f" | "-F" | "-s" | "-l" => {
                let value = iter.next().ok_or_else(|| format!("{} needs an argument", arg))?;
                if arg == "-s" || arg == "-l" {
                    options.files.push(value.clone());
                }
            }
            "-g" => options
                .goals
                .push(iter.next().ok_or("-g needs an argument")?.clone()),
            "-t" => options.toplevel = Some(iter.next().ok_or("-t needs an argument")?.clone()),
            "--" => {
                options.files.extend(iter.by_ref().cloned());
            }
            other if other.starts_with('-') && other.len() > 1 => {
                return Err(format!("unknown option {}", other))
            }
            file => options.files.push(file.to_string()),
        }
    }
    Ok(options)
}

/// Runs the interpreter and returns the process exit code.
pub fn run(options: Options) -> i32 {
    if options.version {
        println!("verdict-prolog version {} (SWI-Prolog compatible subset)", crate::VERSION);
        return 0;
    }
    let handle = std::thread::Builder::new()
        .stack_size(STACK_BYTES)
        .spawn(move || execute(&options))
        .expect("spawn interpreter thread");
    handle.join().unwrap_or(2)
}

fn call_goal(machine: &mut Machine, text: &str) -> Result<bool, i32> {
    let goal = match parse_term_text(text, &machine.ops, machine.flags.double_quotes) {
        Ok(read) => read.term,
        Err(e) => {
            machine.warn(&format!("syntax error in goal {:?}: {}", text, e.message));
            return Err(2);
        }
    };
    run_goal(machine, &goal)
}

fn run_goal(machine: &mut Machine, goal: &crate::term::Term) -> Result<bool, i32> {
    let result = machine.run_once(goal);
    machine.flush();
    match result {
        Ok(ok) => Ok(ok),
        Err(Flow::Halt(code)) => Err(code),
        Err(Flow::Throw(ball)) => {
            let text = machine.format(&ball, true);
            machine.warn(&format!("goal raised exception: {}", text));
            Err(2)
        }
    }
}

fn execute(options: &Options) -> i32 {
    let mut machine = Machine::new();
    for file in &options.files {
        if let Err(message) = machine.consult_file(file) {
            machine.warn(&message);
            return 1;
        }
        for goal in std::mem::take(&mut machine.pending_init) {
            match run_goal(&mut machine, &goal) {
                Ok(true) => {}
                Ok(false) => {
                    machine.warn("initialization goal failed");
                    return 1;
                }
                Err(code) => return code,
            }
        }
    }
    for goal in &options.goals {
        match call_goal(&mut machine, goal) {
            Ok(true) => {}
            Ok(false) => {
                machine.warn(&format!("goal failed: {}", goal));
                return 1;
            }
            Err(code) => return code,
        }
    }
    let code = match &options.toplevel {
        Some(goal) => match call_goal(&mut machine, goal) {
            Ok(true) => 0,
            Ok(false) => 1,
            Err(code) => code,
        },
        None => 0,
    };
    machine.flush();
    code
}
