#![allow(dead_code)]

pub mod sim;

use classroom_core::domain::{KnowledgeComponent, Question, Student};
use classroom_core::{ActivitySpec, IncomingEvent, IncomingKind};

pub const KCS: [&str; 3] = ["Mean", "Circle Graph", "Scatter Plot"];

pub fn small_spec(students: usize) -> ActivitySpec {
    let kcs = KCS
        .iter()
        .map(|n| KnowledgeComponent {
            id: n.to_string(),
            name: n.to_string(),
        })
        .collect();
    let questions = KCS
        .iter()
        .flat_map(|n| {
            (1..=2).map(move |i| Question {
                id: format!("{n} {i}"),
                kc_id: n.to_string(),
            })
        })
        .collect();
    let roster = (0..students)
        .map(|i| Student {
            id: format!("st{i}"),
            display_name: format!("Student {i}"),
        })
        .collect();
    ActivitySpec::new(kcs, questions, roster).unwrap()
}

/// Event `i` of a deterministic stream over `small_spec(students)`.
pub fn nth_event(i: usize, students: usize) -> IncomingEvent {
    let s = (i * 7 + i / 3) % students;
    let q = (i * 5 + s) % 6;
    let kind = match (i + s) % 4 {
        0 => IncomingKind::Hint { ordinal: None },
        1 => IncomingKind::Response { correct: false },
        _ => IncomingKind::Response { correct: true },
    };
    IncomingEvent {
        student_id: format!("st{s}"),
        question_id: format!("{} {}", KCS[q / 2], q % 2 + 1),
        kc_id: None,
        kind,
    }
}
