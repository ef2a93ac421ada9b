//! Clean raw tweets and encode them against a vocabulary.

use offlang::corpus::{self, Vocabulary};

fn main() {
    let raw = [
        "@USER @USER @USER It should scare every American!  She is playing Hockey with a warped puck!",
        "#MAGA rally tonight (again)... @USER thoughts?",
        "no mentions, no hashtags",
    ];
    let mut token_lists = Vec::new();
    for t in raw {
        let (clean, users) = corpus::clean(t);
        println!("{users} @USER  | {clean}");
        token_lists.push(corpus::tokenize(&clean));
    }
    let vocab = Vocabulary::build(&token_lists);
    println!("vocabulary: {} entries, hash {}", vocab.len(), vocab.content_hash());
    let unseen = corpus::tokenize(&corpus::clean("Hockey tonight, @USER!").0);
    println!("encoded (L=10): {:?}", corpus::encode(&unseen, &vocab, 10));
}
