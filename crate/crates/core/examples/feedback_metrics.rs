//! Records reviewer and author feedback on findings and prints the
//! resulting engagement metrics.

use chrono::Utc;
use logdiag::feedback::{compute_metrics, FeedbackEvent, FeedbackKind, FeedbackStore};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let path = tmp.path().join("feedback.jsonl");
    let mut store = FeedbackStore::open(&path)?;
    for id in ["f-001", "f-002", "f-003", "f-004"] {
        store.register_finding(id);
    }

    let events = [
        ("f-001", FeedbackKind::PleaseFix, "reviewer1"),
        ("f-001", FeedbackKind::Helpful, "author1"),
        ("f-002", FeedbackKind::Helpful, "author2"),
        ("f-002", FeedbackKind::Helpful, "author2"),
        ("f-003", FeedbackKind::PleaseFix, "reviewer2"),
        ("f-003", FeedbackKind::Helpful, "author3"),
        ("f-003", FeedbackKind::NotHelpful, "author4"),
    ];
    for (id, kind, user) in events {
        let fresh = store.record(FeedbackEvent { finding_id: id.into(), kind, user: user.into(), at: Utc::now() })?;
        if !fresh {
            println!("duplicate {kind:?} from {user} on {id} ignored");
        }
    }
    if let Err(e) = store.record(FeedbackEvent {
        finding_id: "f-999".into(),
        kind: FeedbackKind::Helpful,
        user: "someone".into(),
        at: Utc::now(),
    }) {
        println!("rejected: {e}");
    }

    print!("\n{}", compute_metrics(&store).render_text());
    println!("\nevent log ({}):", path.display());
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
