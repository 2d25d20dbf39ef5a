use std::time::Instant;
use verdict_prolog::Machine;

fn main() {
    let mut m = Machine::new();
    m.consult_text(
        "count(N, N) :- !.\ncount(I, N) :- I1 is I + 1, count(I1, N).\n\
         len([], 0).\nlen([_|T], N) :- len(T, M), N is M + 1.\n\
         nrev([], []).\nnrev([H|T], R) :- nrev(T, RT), append(RT, [H], R).\n",
        "bench",
    );
    let args: Vec<String> = std::env::args().skip(1).collect();
    let defaults = ["count(0, 1000000)", "numlist(1, 300000, L), len(L, _)", "numlist(1, 600, L), nrev(L, _)"];
    let goals: Vec<&str> = if args.is_empty() { defaults.to_vec() } else { args.iter().map(|s| s.as_str()).collect() };
    for goal in goals {
        let t = Instant::now();
        let r = m.query(goal);
        println!("{goal}: {:?} {:?}", r, t.elapsed());
    }
}
